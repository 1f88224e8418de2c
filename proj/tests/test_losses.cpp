#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "kdq/error.hpp"
#include "kdq/losses.hpp"

using namespace kdq;

namespace {

constexpr LossKind kAll[] = {LossKind::mse, LossKind::margin_mse, LossKind::ranknet,
                             LossKind::kl_div, LossKind::listnet};

std::vector<double> normal_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (const double x : p) h -= x > 0 ? x * std::log(x) : 0.0;
  return h;
}

// Pairwise sums written out over all index pairs.
double naive_margin_mse(const std::vector<double>& t, const std::vector<double>& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (i == j) continue;
      const double e = (t[i] - t[j]) - (s[i] - s[j]);
      total += e * e;
    }
  }
  return total;
}

double naive_ranknet(const std::vector<double>& t, const std::vector<double>& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (t[i] > t[j]) total -= (t[i] - t[j]) * std::log(1.0 / (1.0 + std::exp(-(s[i] - s[j]))));
    }
  }
  return total;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("mse") {
  const std::vector<double> t{1, 2}, s{2, 4};
  CHECK(mse_loss(t, t) == 0.0);
  CHECK(mse_loss(t, s) == doctest::Approx(5.0));
  std::vector<double> g(2);
  mse_loss(t, s, g);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
}

TEST_CASE("margin mse") {
  const std::vector<double> t{2, 0}, s{0, 0};
  CHECK(margin_mse_loss(t, s) == doctest::Approx(8.0));
  const std::vector<double> t3{0.5, -1.0, 3.0}, shifted{7.5, 6.0, 10.0};
  CHECK(margin_mse_loss(t3, shifted) == doctest::Approx(0.0).epsilon(1e-12));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto a = normal_vec(9, rng), b = normal_vec(9, rng);
    CHECK(margin_mse_loss(a, b) == doctest::Approx(naive_margin_mse(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("ranknet uses pairs ordered by the teacher") {
  const std::vector<double> one{3.0};
  CHECK(ranknet_loss(one, one) == 0.0);
  // Only the pair with a positive teacher margin contributes: -1 * log(0.5).
  const std::vector<double> t{1, 0}, s{0, 0};
  CHECK(ranknet_loss(t, s) == doctest::Approx(std::log(2.0)));
  // Correct and confident ordering drives the loss towards zero.
  const std::vector<double> good{30, 0};
  CHECK(ranknet_loss(t, good) < 1e-12);
  const std::vector<double> tied{1, 1};
  CHECK(ranknet_loss(tied, s) == 0.0);

  std::mt19937_64 rng(2);
  for (const std::size_t n : {2u, 5u, 17u, 64u, 301u}) {
    const auto a = normal_vec(n, rng, 3.0), b = normal_vec(n, rng, 3.0);
    CHECK(ranknet_loss(a, b) == doctest::Approx(naive_ranknet(a, b)).epsilon(1e-9));
  }
  const std::vector<double> bad{0.0, std::nan("")};
  CHECK(std::isnan(ranknet_loss(t, bad)));
}

TEST_CASE("softmax distribution") {
  const std::vector<double> flat(4, 2.5);
  for (const double p : softmax_dist(flat)) CHECK(p == doctest::Approx(0.25));

  std::mt19937_64 rng(3);
  const auto s = normal_vec(6, rng);
  auto shifted = s;
  for (auto& x : shifted) x += 1000.0;
  const auto a = softmax_dist(s), b = softmax_dist(shifted);
  double total = 0.0, z = 0.0;
  for (const double x : s) z += std::exp(x);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(a[i] - b[i]) < 1e-6);
    CHECK(a[i] == doctest::Approx(std::exp(s[i]) / z).epsilon(1e-12));
    total += a[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(log_sum_exp(shifted) == doctest::Approx(1000.0 + std::log(z)));
}

TEST_CASE("kl divergence") {
  const std::vector<double> t{0, 0}, s{std::log(3.0), 0};
  CHECK(kl_div_loss(t, t) == doctest::Approx(0.0));
  const double expect = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(expect == doctest::Approx(0.1308).epsilon(1e-3));
  CHECK(kl_div_loss(t, s) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("listnet") {
  std::mt19937_64 rng(4);
  const auto t = normal_vec(7, rng);
  CHECK(listnet_loss(t, t) == doctest::Approx(entropy(softmax_dist(t))).epsilon(1e-12));
  const std::vector<double> zero2{0, 0};
  CHECK(listnet_loss(zero2, zero2) == doctest::Approx(std::log(2.0)));

  const auto s = normal_vec(7, rng);
  std::vector<double> g(7);
  listnet_loss(t, s, g);
  const auto ps = softmax_dist(s), pt = softmax_dist(t);
  for (std::size_t i = 0; i < 7; ++i) CHECK(g[i] == doctest::Approx(ps[i] - pt[i]).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (const auto kind : kAll) {
    CAPTURE(loss_name(kind));
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t n = len(rng);
      const auto t = normal_vec(n, rng, 2.0);
      auto s = normal_vec(n, rng, 2.0);
      std::vector<double> g(n);
      distill_loss(kind, t, s, g);
      for (std::size_t i = 0; i < n; ++i) {
        const double h = 1e-5;
        const double keep = s[i];
        s[i] = keep + h;
        const double up = distill_loss(kind, t, s);
        s[i] = keep - h;
        const double down = distill_loss(kind, t, s);
        s[i] = keep;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max(std::abs(fd), std::abs(g[i])) + 1e-7);
      }
    }
  }
}

TEST_CASE("lower bounds and shift invariance") {
  std::mt19937_64 rng(6);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + inst % 9;
    const auto t = normal_vec(n, rng, 2.0), s = normal_vec(n, rng, 2.0);
    const double h_t = entropy(softmax_dist(t));
    CHECK(mse_loss(t, s) >= 0.0);
    CHECK(margin_mse_loss(t, s) >= 0.0);
    CHECK(ranknet_loss(t, s) >= 0.0);
    CHECK(kl_div_loss(t, s) >= 0.0);
    CHECK(listnet_loss(t, s) >= h_t - 1e-12);
    CHECK(kl_div_loss(t, t) == doctest::Approx(0.0).epsilon(1e-12));

    auto shifted = s;
    for (auto& x : shifted) x += 4.25;
    for (const auto kind : {LossKind::margin_mse, LossKind::ranknet, LossKind::kl_div,
                            LossKind::listnet}) {
      CHECK(distill_loss(kind, t, shifted) ==
            doctest::Approx(distill_loss(kind, t, s)).epsilon(1e-9));
    }
    CHECK(mse_loss(t, shifted) != doctest::Approx(mse_loss(t, s)));
  }
}

TEST_CASE("loss names") {
  for (const auto kind : kAll) CHECK(parse_loss(loss_name(kind)) == kind);
  CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
}

}
