#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "kdq/error.hpp"
#include "kdq/io.hpp"
#include "support.hpp"

using namespace kdq;

namespace {

void put_i32(std::vector<char>& out, std::int32_t v) {
  const auto* b = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), b, b + 4);
}

void put_f32(std::vector<char>& out, float v) {
  const auto* b = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), b, b + 4);
}

}  // namespace

TEST_SUITE("core-data") {

TEST_CASE("inner product examples") {
  const std::vector<float> e0{1, 0}, e1{0, 1}, a{1, 2}, b{3, 4};
  CHECK(inner_product(e0, e1) == 0.0f);
  CHECK(inner_product(a, b) == 11.0f);

  const auto v = test::gaussian(32, 5);
  double norm = 0.0;
  for (const float x : v) norm += static_cast<double>(x) * x;
  CHECK(inner_product(v, v) == doctest::Approx(norm).epsilon(1e-6));
  CHECK(squared_norm(v) == doctest::Approx(norm).epsilon(1e-6));

  const std::vector<float> three{1, 2, 3};
  CHECK_THROWS_AS(inner_product(a, three), ContractError);
}

TEST_CASE("inner product is symmetric and bilinear") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto x = test::gaussian(64, 100 + s), y = test::gaussian(64, 200 + s),
               z = test::gaussian(64, 300 + s);
    const float alpha = 0.7f, beta = -1.3f;
    std::vector<float> mix(64);
    for (std::size_t i = 0; i < 64; ++i) mix[i] = alpha * x[i] + beta * y[i];
    CHECK(inner_product(x, y) == doctest::Approx(inner_product(y, x)).epsilon(1e-5));
    const double lhs = inner_product(mix, z);
    const double rhs = alpha * inner_product(x, z) + beta * inner_product(y, z);
    CHECK(std::abs(lhs - rhs) <= 1e-5 * (std::abs(alpha * inner_product(x, z)) +
                                         std::abs(beta * inner_product(y, z))) + 1e-5);
  }
}

TEST_CASE("l2 distance examples") {
  const auto v = test::gaussian(16, 9);
  CHECK(l2_distance_sq(v, v) == 0.0f);
  const std::vector<float> o{0, 0}, p{3, 4};
  CHECK(l2_distance_sq(o, p) == 25.0f);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = test::gaussian(16, 10 + s), b = test::gaussian(16, 40 + s);
    const double expect = squared_norm(a) + squared_norm(b) - 2.0 * inner_product(a, b);
    CHECK(l2_distance_sq(a, b) == doctest::Approx(expect).epsilon(1e-5));
    CHECK(l2_distance_sq(a, b) >= 0.0f);
  }
  CHECK_THROWS_AS(l2_distance_sq(o, std::vector<float>{1, 2, 3}), ContractError);
}

TEST_CASE("embedding set validates its contents") {
  CHECK_THROWS_AS(EmbeddingSet(2, 3, std::vector<float>(5)), ContractError);
  CHECK_THROWS_AS(EmbeddingSet(1, 0, {}), ContractError);
  CHECK_THROWS_AS(EmbeddingSet(1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()}),
                  ContractError);
  const EmbeddingSet s(2, 2, {1, 2, 3, 4});
  CHECK(s.count() == 2);
  CHECK(s.row(1)[0] == 3.0f);
}

TEST_CASE("judgments reject bad ids") {
  CHECK_NOTHROW(RelevanceJudgments(test::Lists{{0, 2}, {}}).validate(3));
  CHECK_THROWS_AS(RelevanceJudgments(test::Lists{{0, 3}}).validate(3), ContractError);
  CHECK_THROWS_AS(RelevanceJudgments(test::Lists{{1, 1}}).validate(3), ContractError);
}

TEST_CASE("vector files round trip bit-exactly") {
  const auto dir = test::scratch_dir("io_roundtrip");

  SUBCASE("three vectors of dim 4") {
    const EmbeddingSet s(3, 4, test::gaussian(12, 3));
    write_embeddings(s, dir / "a.fvecs");
    const auto back = read_embeddings(dir / "a.fvecs");
    REQUIRE(back.count() == 3);
    REQUIRE(back.dim() == 4);
    CHECK(std::memcmp(back.values().data(), s.values().data(), 12 * sizeof(float)) == 0);
  }

  SUBCASE("signed zero and subnormals survive") {
    const std::vector<float> odd{-0.0f, 0.0f, std::numeric_limits<float>::denorm_min(),
                                 -std::numeric_limits<float>::max()};
    write_embeddings(EmbeddingSet(1, 4, odd), dir / "b.fvecs");
    const auto back = read_embeddings(dir / "b.fvecs");
    CHECK(std::memcmp(back.values().data(), odd.data(), sizeof(float) * 4) == 0);
    CHECK(std::signbit(back.row(0)[0]));
  }

  SUBCASE("empty set needs the dimension from the caller") {
    write_embeddings(EmbeddingSet(8), dir / "empty.fvecs");
    CHECK(std::filesystem::file_size(dir / "empty.fvecs") == 0);
    const auto back = read_embeddings(dir / "empty.fvecs", 8);
    CHECK(back.count() == 0);
    CHECK(back.dim() == 8);
    CHECK_THROWS_AS(read_embeddings(dir / "empty.fvecs"), FormatError);
  }
}

TEST_CASE("corrupt vector files name the failing offset") {
  const auto dir = test::scratch_dir("io_corrupt");
  std::vector<char> bytes;
  for (int r = 0; r < 4; ++r) {
    const int d = r == 2 ? 3 : 4;
    put_i32(bytes, d);
    for (int i = 0; i < d; ++i) put_f32(bytes, static_cast<float>(i));
  }
  write_file_bytes(dir / "dims.fvecs", bytes);
  try {
    read_embeddings(dir / "dims.fvecs");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
    CHECK(e.offset() == 2 * 20);
  }

  std::vector<char> nan_file;
  put_i32(nan_file, 2);
  put_f32(nan_file, 1.0f);
  put_f32(nan_file, std::numeric_limits<float>::infinity());
  write_file_bytes(dir / "inf.fvecs", nan_file);
  try {
    read_embeddings(dir / "inf.fvecs");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 8);
  }

  auto truncated = bytes;
  truncated.resize(30);
  write_file_bytes(dir / "short.fvecs", truncated);
  CHECK_THROWS_AS(read_embeddings(dir / "short.fvecs"), FormatError);
}

TEST_CASE("judgment files in both layouts") {
  const auto dir = test::scratch_dir("io_judgments");
  const RelevanceJudgments j({{1, 4}, {}, {0}});
  write_judgments_tsv(j, dir / "j.tsv");
  write_id_lists(j.lists(), dir / "j.ivecs");
  CHECK(read_judgments(dir / "j.tsv", 3, 5).lists() == j.lists());
  CHECK(read_judgments(dir / "j.ivecs", 3, 5).lists() == j.lists());
  CHECK_THROWS_AS(read_judgments(dir / "j.ivecs", 4, 5), FormatError);
  CHECK_THROWS(read_judgments(dir / "j.tsv", 3, 4));

  std::ofstream(dir / "bad.tsv") << "0\t1\n1 2\n";
  CHECK_THROWS_AS(read_judgments(dir / "bad.tsv", 3, 5), FormatError);
}

TEST_CASE("top-k selection matches a full sort") {
  const auto docs = test::random_set(300, 8, 17);
  const auto q = test::gaussian(8, 18);
  std::vector<ScoredId> all;
  for (std::uint32_t d = 0; d < docs.count(); ++d) all.push_back({d, inner_product(q, docs.row(d))});
  std::sort(all.begin(), all.end(), ranks_before);
  for (const std::size_t k : {1u, 7u, 300u, 500u}) {
    const auto got = exact_top_k(q, docs, k);
    REQUIRE(got.size() == std::min<std::size_t>(k, 300));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].id == all[i].id);
  }

  TopKSelector sel(3);
  for (std::uint32_t id : {5u, 2u, 9u, 1u}) sel.push(id, 1.0f);
  const auto ties = sel.take_sorted();
  REQUIRE(ties.size() == 3);
  CHECK(ties[0].id == 1);
  CHECK(ties[1].id == 2);
  CHECK(ties[2].id == 5);
}

}
