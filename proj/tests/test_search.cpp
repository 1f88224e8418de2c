#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "kdq/error.hpp"
#include "kdq/sampling.hpp"
#include "kdq/search.hpp"
#include "support.hpp"

using namespace kdq;

namespace {

// Exhaustive ranking of <q', reconstruct_full(d)> over every document.
RankedResult exhaustive(std::span<const float> q, const QueryTransform* t, const IndexArtifact& idx) {
  std::vector<double> vq(q.begin(), q.end());
  if (t != nullptr) vq = t->apply(q);
  RankedResult all;
  for (std::uint32_t d = 0; d < idx.doc_count(); ++d) {
    const auto rec = reconstruct_full(idx.code(d), idx.centroids, idx.codebooks);
    double s = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i) s += vq[i] * rec[i];
    all.push_back({d, static_cast<float>(s)});
  }
  std::sort(all.begin(), all.end(), ranks_before);
  return all;
}

double naive_recall(const std::vector<RankedResult>& res, const RelevanceJudgments& j,
                    std::size_t k) {
  double hits = 0.0, judged = 0.0;
  for (std::size_t q = 0; q < res.size(); ++q) {
    if (j.relevant(q).empty()) continue;
    judged += 1;
    bool hit = false;
    for (std::size_t r = 0; r < std::min(k, res[q].size()); ++r) {
      for (const auto g : j.relevant(q)) hit = hit || res[q][r].id == g;
    }
    hits += hit ? 1 : 0;
  }
  return hits / judged;
}

double naive_mrr(const std::vector<RankedResult>& res, const RelevanceJudgments& j, std::size_t k) {
  double total = 0.0, judged = 0.0;
  for (std::size_t q = 0; q < res.size(); ++q) {
    if (j.relevant(q).empty()) continue;
    judged += 1;
    for (std::size_t r = 0; r < std::min(k, res[q].size()); ++r) {
      const auto rel = j.relevant(q);
      if (std::find(rel.begin(), rel.end(), res[q][r].id) != rel.end()) {
        total += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return total / judged;
}

RankedResult ranked(std::initializer_list<std::uint32_t> ids) {
  RankedResult r;
  float s = 10.0f;
  for (const auto id : ids) r.push_back({id, s -= 1.0f});
  return r;
}

}  // namespace

TEST_SUITE("search-eval") {

TEST_CASE("full probing equals exhaustive scoring of reconstructions") {
  const auto docs = test::random_set(600, 16, 60);
  const auto idx = init_index(docs, {.lists = 12, .m = 4, .p = 16, .seed = 1});
  auto t = QueryTransform::identity(16);
  t.weight[5] = 0.3f;
  t.bias[2] = 0.1f;
  const auto queries = test::random_set(20, 16, 61);
  for (std::size_t q = 0; q < 20; ++q) {
    const auto* tp = q % 2 == 0 ? &t : nullptr;
    const auto got = search(queries.row(q), tp, idx, {.nprobe = 12, .top_k = 600});
    const auto want = exhaustive(queries.row(q), tp, idx);
    REQUIRE(got.size() == 600);
    for (std::size_t r = 0; r < 600; ++r) {
      CHECK(got[r].id == want[r].id);
      CHECK(got[r].score == doctest::Approx(want[r].score).epsilon(1e-4));
    }
  }
}

TEST_CASE("zero codebooks score by list bias with id tie breaks") {
  auto idx = test::random_index(50, 8, 4, 2, 4, 62);
  std::fill(idx.codebooks.values.begin(), idx.codebooks.values.end(), 0.0f);
  const auto q = test::gaussian(8, 63);
  const auto res = search(q, nullptr, idx, {.nprobe = 4, .top_k = 50});
  for (const auto& r : res) {
    CHECK(r.score == doctest::Approx(inner_product(q, idx.centroids.row(idx.ivf_ids[r.id]))).epsilon(1e-5));
  }
  for (std::size_t i = 1; i < res.size(); ++i) {
    CHECK(ranks_before(res[i - 1], res[i]));
  }
}

TEST_CASE("probing, clamping and arguments") {
  const auto docs = test::random_set(400, 8, 64);
  const auto idx = init_index(docs, {.lists = 6, .m = 2, .p = 8});
  const auto q = test::gaussian(8, 65);
  const auto one = search(q, nullptr, idx, {.nprobe = 1, .top_k = 400});
  std::vector<double> bias(6);
  for (std::size_t l = 0; l < 6; ++l) bias[l] = inner_product(q, idx.centroids.row(l));
  const auto best = std::max_element(bias.begin(), bias.end()) - bias.begin();
  CHECK(one.size() == idx.posting_lists[best].size());
  for (const auto& r : one) CHECK(idx.ivf_ids[r.id] == best);

  CHECK(search(q, nullptr, idx, {.nprobe = 60, .top_k = 10}).size() == 10);
  CHECK_THROWS_AS(search(q, nullptr, idx, {.nprobe = 1, .top_k = 0}), ContractError);
}

TEST_CASE("brute force") {
  const auto docs = test::random_set(300, 8, 66);
  const auto queries = test::random_set(4, 8, 67);
  const auto cache = mine_topk(queries, docs, 25);
  for (std::size_t q = 0; q < 4; ++q) {
    const auto full = brute_force_search(queries.row(q), docs, 300);
    REQUIRE(full.size() == 300);
    for (std::size_t i = 1; i < 300; ++i) CHECK(ranks_before(full[i - 1], full[i]));
    const auto top = brute_force_search(queries.row(q), docs, 25);
    for (std::size_t i = 0; i < 25; ++i) CHECK(top[i].id == cache[q][i]);
  }
  const EmbeddingSet single(1, 8, test::gaussian(8, 68));
  const auto r = brute_force_search(queries.row(0), single, 5);
  REQUIRE(r.size() == 1);
  CHECK(r[0].id == 0);
}

TEST_CASE("recall and mrr examples") {
  const std::vector<RankedResult> res{ranked({3, 1, 2, 9}), ranked({4, 5, 6, 7})};
  CHECK(recall_at_k(res, RelevanceJudgments(test::Lists{{3}, {4}}), 1) == 1.0);
  CHECK(recall_at_k(res, RelevanceJudgments(test::Lists{{2}, {0}}), 3) == 0.5);
  CHECK(mrr_at_k(res, RelevanceJudgments(test::Lists{{3}, {4}}), 10) == 1.0);
  CHECK(mrr_at_k({res.begin(), 1}, RelevanceJudgments(test::Lists{{9}}), 10) == 0.25);
  CHECK(recall_at_k(res, RelevanceJudgments(test::Lists{{9}, {}}), 4) == 1.0);
  CHECK_THROWS_AS(recall_at_k(res, RelevanceJudgments(test::Lists{{}, {}}), 4), ContractError);
  CHECK_THROWS_AS(mrr_at_k(res, RelevanceJudgments(test::Lists{{1}}), 4), ContractError);
}

TEST_CASE("metrics agree with a recount and behave monotonically") {
  const auto docs = test::random_set(2000, 16, 69);
  const auto idx = init_index(docs, {.lists = 32, .m = 4, .p = 16, .seed = 2});
  const auto queries = test::random_set(100, 16, 70);
  std::mt19937_64 rng(7);
  std::vector<std::vector<std::uint32_t>> lists(100);
  for (std::size_t q = 0; q < 100; ++q) {
    if (q % 7 == 0) continue;
    lists[q].push_back(brute_force_search(queries.row(q), docs, 1)[0].id);
    if (q % 3 == 0) lists[q].push_back(static_cast<std::uint32_t>(rng() % 2000));
    std::sort(lists[q].begin(), lists[q].end());
    lists[q].erase(std::unique(lists[q].begin(), lists[q].end()), lists[q].end());
  }
  const RelevanceJudgments j(lists);
  double prev_recall = -1.0;
  for (const std::size_t nprobe : {1u, 2u, 4u, 8u, 16u, 32u}) {
    const auto res = search_all(queries, nullptr, idx, {.nprobe = nprobe, .top_k = 100});
    for (const std::size_t k : {1u, 10u, 50u, 100u}) {
      CHECK(recall_at_k(res, j, k) == doctest::Approx(naive_recall(res, j, k)));
    }
    CHECK(mrr_at_k(res, j, 10) == doctest::Approx(naive_mrr(res, j, 10)));
    CHECK(mrr_at_k(res, j, 10) <= recall_at_k(res, j, 10));
    CHECK(recall_at_k(res, j, 10) <= recall_at_k(res, j, 50));
    CHECK(recall_at_k(res, j, 50) <= recall_at_k(res, j, 100));
    const double r100 = recall_at_k(res, j, 100);
    CHECK(r100 >= prev_recall);
    prev_recall = r100;
  }
}

}
