#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "rltm/grad_check.hpp"
#include "rltm/selector.hpp"
#include "test_util.hpp"

using namespace rltm;
using test::make_doc;
using test::make_query;
using test::tiny_model;

TEST_CASE("bow_encode averages non-PAD rows") {
  Tensor emb = Tensor::zeros({4, 2});
  emb.at(2, 0) = 1;           // token 2 -> [1, 0]
  emb.at(3, 1) = 1;           // token 3 -> [0, 1]
  std::vector<TokenId> one = {2};
  CHECK(bow_encode(one, emb) == std::vector<real>{1, 0});
  std::vector<TokenId> two = {2, 3};
  CHECK(bow_encode(two, emb) == std::vector<real>{0.5, 0.5});
  std::vector<TokenId> repeated = {2, 2};
  CHECK(bow_encode(repeated, emb) == bow_encode(one, emb));
  std::vector<TokenId> padded = {2, kPadId, 3, kPadId};
  CHECK(bow_encode(padded, emb) == std::vector<real>{0.5, 0.5});
  std::vector<TokenId> all_pad = {kPadId, kPadId};
  CHECK(bow_encode(all_pad, emb) == std::vector<real>{0, 0});
}

TEST_CASE("policy over identical sentences is uniform") {
  Model model = tiny_model(MatcherKind::knrm, 3);
  const Query query = make_query("q", {4, 5});
  const EncodedDocument doc = make_doc("d", {{6, 7}, {6, 7}, {6, 7}, {6, 7}});
  const PolicyCache cache = compute_policy(model, query, doc);
  for (real p : cache.policy.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("policy rejects documents with no body sentences") {
  Model model = tiny_model(MatcherKind::knrm, 3);
  const Query query = make_query("q", {4});
  const EncodedDocument empty = make_doc("d", {});
  CHECK_THROWS_AS(compute_policy(model, query, empty), DimensionError);
}

// Independent evaluation of the selection equations with hand-set weights:
// h = tanh(W bow + b), c_t = cos(h_q, h_ut), probs = softmax(c).
TEST_CASE("policy matches a direct formula evaluation") {
  ModelConfig cfg;
  cfg.vocab_size = 6;
  cfg.embed_dim = 2;
  cfg.hidden_dim = 2;
  cfg.query_cap = 4;
  cfg.sentence_len_cap = 4;
  Model model = Model::create(cfg, 1);
  // identity W, zero b, fixed embeddings
  model.sel_Wq.value.fill(0);
  model.sel_Wu.value.fill(0);
  model.sel_Wq.value.at(0, 0) = model.sel_Wq.value.at(1, 1) = 1;
  model.sel_Wu.value.at(0, 0) = model.sel_Wu.value.at(1, 1) = 1;
  model.sel_bq.value.fill(0);
  model.sel_bu.value.fill(0);
  const double e[6][2] = {{0, 0}, {0, 0}, {0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}, {-0.4, 0.7}};
  for (size_t t = 0; t < 6; ++t) {
    model.embeddings.value.at(t, 0) = static_cast<real>(e[t][0]);
    model.embeddings.value.at(t, 1) = static_cast<real>(e[t][1]);
  }

  const Query query = make_query("q", {2, 3});
  const EncodedDocument doc = make_doc("d", {{4}, {5}, {2, 3}});
  const PolicyCache cache = compute_policy(model, query, doc);

  const double hq[2] = {std::tanh((0.9 + 0.2) / 2), std::tanh((0.1 + 0.8) / 2)};
  double c[3];
  const double sentence_bow[3][2] = {{0.5, 0.5}, {-0.4, 0.7}, {(0.9 + 0.2) / 2, (0.1 + 0.8) / 2}};
  for (int t = 0; t < 3; ++t) {
    const double hu0 = std::tanh(sentence_bow[t][0]), hu1 = std::tanh(sentence_bow[t][1]);
    const double dot = hq[0] * hu0 + hq[1] * hu1;
    const double na = std::sqrt(hq[0] * hq[0] + hq[1] * hq[1]);
    const double nb = std::sqrt(hu0 * hu0 + hu1 * hu1);
    c[t] = dot / (na * nb + 1e-12);
  }
  const double m = std::max({c[0], c[1], c[2]});
  double z = 0;
  for (double x : c) z += std::exp(x - m);
  for (int t = 0; t < 3; ++t) {
    CHECK(cache.policy.scores[t] == doctest::Approx(c[t]).epsilon(1e-10));
    CHECK(cache.policy.probs[t] == doctest::Approx(std::exp(c[t] - m) / z).epsilon(1e-10));
  }
}

TEST_CASE("policy probabilities sum to 1 over random documents") {
  Model model = tiny_model(MatcherKind::knrm, 5);
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t t_count = 1 + rng.uniform_index(12);
    std::vector<std::vector<TokenId>> sentences(t_count);
    for (auto& s : sentences) {
      s.resize(1 + rng.uniform_index(6));
      for (auto& id : s) id = static_cast<TokenId>(2 + rng.uniform_index(48));
    }
    const Query query = make_query("q", {static_cast<TokenId>(2 + rng.uniform_index(48))});
    const PolicyCache cache = compute_policy(model, query, make_doc("d", sentences));
    double sum = 0;
    for (real p : cache.policy.probs) {
      CHECK(p > 0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("duplicating a sentence splits its probability mass") {
  Model model = tiny_model(MatcherKind::knrm, 9);
  const Query query = make_query("q", {4, 9});
  const std::vector<std::vector<TokenId>> base = {{5, 6}, {7}, {8, 10, 11}};
  const PolicyCache orig = compute_policy(model, query, make_doc("d", base));
  auto duplicated = base;
  duplicated.push_back(base[1]);  // second copy of sentence 1
  const PolicyCache dup = compute_policy(model, query, make_doc("d", duplicated));
  const double p1 = orig.policy.probs[1];
  const double expected_copy = p1 / (1 + p1);  // new normalizer is (1 + p1) * old
  CHECK(dup.policy.probs[1] == doctest::Approx(expected_copy).epsilon(1e-9));
  CHECK(dup.policy.probs[3] == doctest::Approx(expected_copy).epsilon(1e-9));
  for (size_t j : {0u, 2u}) {
    CHECK(dup.policy.probs[j] == doctest::Approx(orig.policy.probs[j] / (1 + p1)).epsilon(1e-9));
  }
}

TEST_CASE("select_topk ordering, ties and exhaustion") {
  SelectionPolicy policy;
  policy.scores = {0, 0, 0};
  policy.probs = {0.5, 0.3, 0.2};
  CHECK(select_topk(policy, 2).indices == std::vector<size_t>{0, 1});
  policy.probs = {0.25, 0.25, 0.25};
  CHECK(select_topk(policy, 2).indices == std::vector<size_t>{0, 1});
  policy.probs = {0.2, 0.3, 0.5};
  const auto all = select_topk(policy, 3);
  CHECK(all.indices == std::vector<size_t>{2, 1, 0});
  const auto more = select_topk(policy, 10);
  CHECK(more.indices.size() == 3);
  CHECK(select_topk(policy, 1).log_prob_sum == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(select_topk(policy, 0), ConfigError);
}

TEST_CASE("select_topk is deterministic") {
  Model model = tiny_model(MatcherKind::knrm, 13);
  const Query query = make_query("q", {3, 4});
  const EncodedDocument doc = make_doc("d", {{5}, {6}, {7}, {8}, {9}});
  const auto a = select_topk(compute_policy(model, query, doc).policy, 3);
  const auto b = select_topk(compute_policy(model, query, doc).policy, 3);
  CHECK(a.indices == b.indices);
  CHECK(a.log_prob_sum == b.log_prob_sum);
}

TEST_CASE("sample_k degenerate policy always picks the dominant index first") {
  SelectionPolicy policy;
  policy.probs = {1e-9, 1 - 2e-9, 1e-9};
  policy.scores = {0, 0, 0};
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto sel = sample_k(policy, 1, rng);
    REQUIRE(sel.indices.size() == 1);
    CHECK(sel.indices[0] == 1);
  }
}

TEST_CASE("sample_k uniform frequencies approach 1/T") {
  SelectionPolicy policy;
  policy.probs = {0.25, 0.25, 0.25, 0.25};
  policy.scores = {0, 0, 0, 0};
  Rng rng(22);
  std::vector<int> counts(4, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) counts[sample_k(policy, 1, rng).indices[0]] += 1;
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(draws) - 0.25) < 0.02);
}

TEST_CASE("sample_k exhaustion and log-prob convention") {
  SelectionPolicy policy;
  policy.probs = {0.5, 0.2, 0.3};
  policy.scores = {0, 0, 0};
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    const auto sel = sample_k(policy, 3, rng);
    CHECK(std::set<size_t>(sel.indices.begin(), sel.indices.end()) ==
          std::set<size_t>{0, 1, 2});
    // sum of the ORIGINAL pi values, not the renormalized sequential ones
    CHECK(sel.log_prob_sum ==
          doctest::Approx(std::log(0.5) + std::log(0.2) + std::log(0.3)).epsilon(1e-12));
  }
  for (int i = 0; i < 50; ++i) {
    const auto sel = sample_k(policy, 2, rng);
    CHECK(sel.indices.size() == 2);
    CHECK(sel.indices[0] != sel.indices[1]);
    CHECK(sel.log_prob_sum == doctest::Approx(std::log(policy.probs[sel.indices[0]]) +
                                              std::log(policy.probs[sel.indices[1]]))
                                  .epsilon(1e-12));
  }
}

TEST_CASE("sample_k without replacement matches Plackett-Luce pair frequencies") {
  SelectionPolicy policy;
  policy.probs = {0.6, 0.3, 0.1};
  policy.scores = {0, 0, 0};
  Rng rng(24);
  const int draws = 20000;
  std::map<std::pair<size_t, size_t>, int> counts;
  for (int i = 0; i < draws; ++i) {
    const auto sel = sample_k(policy, 2, rng);
    counts[{sel.indices[0], sel.indices[1]}] += 1;
  }
  auto expected = [&](size_t a, size_t b) {
    return policy.probs[a] * policy.probs[b] / (1 - policy.probs[a]);
  };
  for (const auto& [pair, count] : counts) {
    const double freq = count / static_cast<double>(draws);
    CHECK(std::abs(freq - expected(pair.first, pair.second)) < 0.02);
  }
}

TEST_CASE("sample_k with replacement can repeat indices") {
  SelectionPolicy policy;
  policy.probs = {0.9, 0.1};
  policy.scores = {0, 0};
  Rng rng(25);
  bool saw_repeat = false;
  for (int i = 0; i < 200 && !saw_repeat; ++i) {
    const auto sel = sample_k(policy, 2, rng, /*with_replacement=*/true);
    saw_repeat = sel.indices[0] == sel.indices[1];
  }
  CHECK(saw_repeat);
}

TEST_CASE("policy_grad is zero for zero reward and single-sentence documents") {
  Model model = tiny_model(MatcherKind::knrm, 31);
  const Query query = make_query("q", {4, 5});
  const EncodedDocument doc = make_doc("d", {{6}, {7}});
  const PolicyCache cache = compute_policy(model, query, doc);
  SelectedSentences sel;
  sel.indices = {0};
  sel.log_prob_sum = std::log(cache.policy.probs[0]);
  model.zero_grads();
  policy_grad(model, query, doc, cache, sel, /*reward=*/0, true);
  for (const ParamTensor* p : model.selector_params(true)) {
    for (real g : p->grad.v) CHECK(g == 0);
  }

  const EncodedDocument single = make_doc("d1", {{6, 7}});
  const PolicyCache cache1 = compute_policy(model, query, single);
  CHECK(cache1.policy.probs[0] == doctest::Approx(1.0).epsilon(1e-12));
  SelectedSentences sel1;
  sel1.indices = {0};
  policy_grad(model, query, single, cache1, sel1, /*reward=*/2.5, true);
  for (const ParamTensor* p : model.selector_params(true)) {
    for (real g : p->grad.v) CHECK(std::abs(g) < 1e-15);
  }
}

TEST_CASE("policy_grad matches finite differences of sum log pi") {
  for (uint64_t seed : {41u, 42u, 43u}) {
    Model model = tiny_model(MatcherKind::knrm, seed);
    test::condition_model(model, seed * 7);
    const Query query = make_query("q", {4, 5, 6});
    const EncodedDocument doc = make_doc("d", {{7, 8}, {9}, {10, 11, 12}});
    SelectedSentences sel;
    sel.indices = {2};

    auto eval = [&](bool with_grad) {
      const PolicyCache cache = compute_policy(model, query, doc);
      if (with_grad) {
        // reward -1 under the descent convention accumulates +d(log pi)/dtheta
        policy_grad(model, query, doc, cache, sel, /*reward=*/-1, true);
      }
      double loss = 0;
      for (size_t idx : sel.indices) loss += std::log(cache.policy.probs[idx]);
      return loss;
    };
    const auto params = model.selector_params(true);
    const auto result = grad_check(eval, params, 24, seed);
    CHECK(result.max_rel_error < 1e-6);
  }
}

TEST_CASE("policy_grad K=2 selection matches finite differences") {
  Model model = tiny_model(MatcherKind::knrm, 55);
  test::condition_model(model, 550);
  const Query query = make_query("q", {4, 13});
  const EncodedDocument doc = make_doc("d", {{7, 8}, {9}, {10, 11}, {14, 15}});
  SelectedSentences sel;
  sel.indices = {3, 0};
  auto eval = [&](bool with_grad) {
    const PolicyCache cache = compute_policy(model, query, doc);
    if (with_grad) policy_grad(model, query, doc, cache, sel, -1, true);
    return std::log(cache.policy.probs[3]) + std::log(cache.policy.probs[0]);
  };
  CHECK(grad_check(eval, model.selector_params(true), 24, 56).max_rel_error < 1e-6);
}

TEST_CASE("policy_grad leaves embeddings alone when frozen") {
  Model model = tiny_model(MatcherKind::knrm, 61);
  const Query query = make_query("q", {4, 5});
  const EncodedDocument doc = make_doc("d", {{6}, {7}, {8}});
  const PolicyCache cache = compute_policy(model, query, doc);
  SelectedSentences sel;
  sel.indices = {1};
  model.zero_grads();
  policy_grad(model, query, doc, cache, sel, 1.5, /*update_embeddings=*/false);
  for (real g : model.embeddings.grad.v) CHECK(g == 0);
  real wq_norm = 0;
  for (real g : model.sel_Wq.grad.v) wq_norm += g * g;
  CHECK(wq_norm > 0);
}
