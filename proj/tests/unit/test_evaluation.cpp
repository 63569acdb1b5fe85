// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "fscap/evaluation.hpp"
#include "toy_model.hpp"

using namespace fscap;
using namespace fscap::text;

namespace {

Words w(std::string_view s) { return normalize(s).tokens; }

// Independent BLEU-3: n-grams as joined strings, counts by linear scans.
double brute_bleu3(const Words& cand, const std::vector<Words>& refs) {
  auto grams = [](const Words& x, std::size_t n) {
    std::vector<std::string> g;
    for (std::size_t i = 0; i + n <= x.size(); ++i) {
      std::string s;
      for (std::size_t k = 0; k < n; ++k) s += x[i + k] + "\x1f";
      g.push_back(s);
    }
    return g;
  };
  double logp = 0.0;
  for (std::size_t n = 1; n <= 3; ++n) {
    auto cg = grams(cand, n);
    if (cg.empty()) continue;
    std::vector<std::string> uniq = cg;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    double m = 0.0;
    for (const auto& g : uniq) {
      long c = std::count(cg.begin(), cg.end(), g);
      long best = 0;
      for (const auto& r : refs) {
        auto rg = grams(r, n);
        best = std::max<long>(best, std::count(rg.begin(), rg.end(), g));
      }
      m += static_cast<double>(std::min(c, best));
    }
    if (m == 0.0) return 0.0;
    logp += std::log(m / static_cast<double>(cg.size())) / 3.0;
  }
  std::size_t r = refs[0].size();
  for (const auto& ref : refs) {
    long d = std::labs(long(ref.size()) - long(cand.size()));
    long db = std::labs(long(r) - long(cand.size()));
    if (d < db || (d == db && ref.size() < r)) r = ref.size();
  }
  double bp = cand.size() > r ? 1.0 : std::exp(1.0 - double(r) / double(cand.size()));
  return bp * std::exp(logp);
}

SynthStyleSpec spec() {
  SynthStyleSpec s;
  s.styles = {{"positive", {"happy", "lovely"}}, {"negative", {"sad", "ugly"}}};
  s.subjects = {"dog", "cat"};
  s.verbs = {"sits"};
  s.preps = {"on"};
  s.objects = {"grass"};
  s.attributes = {"red"};
  return s;
}

}  // namespace

TEST_CASE("bleu3 hand case") {
  std::vector<Words> refs = {w("the cat sat on the mat")};
  const double b = bleu3(w("the cat sat on mat"), refs);
  CHECK(b == doctest::Approx(std::exp(-0.2) * std::cbrt(0.5)).epsilon(1e-12));
}

TEST_CASE("bleu3 agrees with a brute-force oracle") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    auto draw = [&] {
      Words x(1 + rng() % 8);
      for (auto& t : x) t = pool[rng() % pool.size()];
      return x;
    };
    std::vector<Words> refs(1 + rng() % 3);
    for (auto& r : refs) r = draw();
    auto cand = draw();
    const double expected = brute_bleu3(cand, refs);
    CHECK(std::abs(bleu3(cand, refs) - expected) <= 1e-9);
  }
}

TEST_CASE("bleu3 limits") {
  std::vector<Words> refs = {w("a dog sits on the grass .")};
  CHECK(bleu3(refs[0], refs) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bleu3(w("zebra flies"), refs) <= 0.05);
  CHECK(bleu3(Words{}, refs) == 0.0);
  std::vector<Words> short_ref = {w("a dog")};
  CHECK(bleu3(w("a dog"), short_ref) == doctest::Approx(1.0));
  CHECK_THROWS_AS(bleu3(w("a"), std::vector<Words>{}), std::invalid_argument);
}

TEST_CASE("corpus bleu3 pools counts") {
  std::vector<Words> cands = {w("the cat sat on mat"), w("a dog")};
  std::vector<std::vector<Words>> refs = {{w("the cat sat on the mat")}, {w("a dog")}};
  // unigrams 7/7, bigrams 4/5, trigrams 2/3, c = 7, r = 8
  const double expected = std::exp(1.0 - 8.0 / 7.0) * std::cbrt(1.0 * 0.8 * (2.0 / 3.0));
  CHECK(corpus_bleu3(cands, refs) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("geomean reproduces published summary columns") {
  CHECK(geomean(66.26, 79.10) == doctest::Approx(72.40).epsilon(1e-4));
  CHECK(geomean(62.8, 82.8) == doctest::Approx(72.1).epsilon(1e-3));
  CHECK(geomean(72.7, 82.8) == doctest::Approx(77.6).epsilon(1e-3));
  CHECK(geomean(0.0, 50.0) == 0.0);
  CHECK_THROWS_AS(geomean(-1.0, 4.0), std::invalid_argument);
  CHECK(content_percent(1.0) == 100.0);
  CHECK(content_percent(-1.0) == 0.0);
  CHECK(content_percent(0.0) == 50.0);
}

TEST_CASE("style accuracy and content overlap") {
  auto s = spec();
  std::vector<Words> out = {w("a happy dog"), w("a sad dog"), w("a dog"), w("a lovely cat")};
  CHECK(style_accuracy(out, 0, s) == doctest::Approx(0.5));
  CHECK(style_accuracy(out, kFactualStyle, s) == doctest::Approx(0.25));
  CHECK(style_accuracy(std::vector<Words>{}, 0, s) == 0.0);

  auto [kept, total] = content_overlap(w("a red dog sits on the grass ."), w("a sad dog sits on red red"), s);
  CHECK(total == 5);  // red dog sits on grass
  CHECK(kept == 4);
  auto [k2, t2] = content_overlap(w("a dog sits on the dog"), w("a dog"), s);
  CHECK(t2 == 4);
  CHECK(k2 == 1);
}

TEST_CASE("uniform unigram perplexity equals vocabulary size") {
  NgramLM lm(1, 1.0, 17);
  std::vector<TokenSeq> s = {{4, 5, 6}, {7}};
  CHECK(lm.perplexity(s) == doctest::Approx(17.0).epsilon(1e-12));
}

TEST_CASE("bigram hand case") {
  std::vector<TokenSeq> corpus = {{4}, {4, 4}};
  auto lm = train_ngram_lm(corpus, 2, 1.0, 5);
  const TokenSeq bos = {};
  const TokenSeq four = {4};
  CHECK(std::abs(lm.prob(bos, 4) - 3.0 / 7.0) <= 1e-9);
  CHECK(std::abs(lm.prob(four, kEos) - 3.0 / 8.0) <= 1e-9);
  CHECK(std::abs(lm.prob(four, 4) - 1.0 / 4.0) <= 1e-9);
  CHECK(std::abs(lm.prob(four, 3) - 1.0 / 8.0) <= 1e-9);
  const TokenSeq one = {4};
  CHECK(std::abs(lm.log_prob_sentence(one) - std::log(3.0 / 7.0 * 3.0 / 8.0)) <= 1e-9);
  std::vector<TokenSeq> eval = {{4}};
  CHECK(std::abs(lm.perplexity(eval) - std::exp(-std::log(9.0 / 56.0) / 2.0)) <= 1e-9);
  double sum = 0.0;
  for (int v = 0; v < 5; ++v) sum += lm.prob(four, v);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(lm.prob(four, 5), std::out_of_range);
  CHECK_THROWS_AS(NgramLM(0, 1.0, 5), std::invalid_argument);
}

TEST_CASE("pca2d matches power iteration") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const std::size_t n = 300, d = 6;
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (auto& row : x) {
    const double a = 3.0 * n01(rng), b = 1.0 * n01(rng);
    for (std::size_t j = 0; j < d; ++j) row[j] = a * (j % 2 ? 1.0 : -0.5) + b * (j < 3 ? 1.0 : -1.0) + 0.1 * n01(rng) + 5.0;
  }
  auto p = pca2d(x);
  REQUIRE(p.size() == n);

  std::vector<double> mean(d, 0.0);
  for (const auto& row : x)
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j] / double(n);
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& row : x)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / double(n - 1);
  std::vector<double> v(d, 1.0);
  for (int it = 0; it < 500; ++it) {
    std::vector<double> nv(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) nv[i] += cov[i][j] * v[j];
    double norm = 0.0;
    for (double e : nv) norm += e * e;
    for (std::size_t i = 0; i < d; ++i) v[i] = nv[i] / std::sqrt(norm);
  }

  double mx = 0, my = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += (x[i][j] - mean[j]) * v[j];
    CHECK(std::abs(std::abs(p[i].first) - std::abs(dot)) <= 1e-6);
    mx += p[i].first / double(n);
    my += p[i].second / double(n);
  }
  for (const auto& [a, b] : p) {
    vx += (a - mx) * (a - mx);
    vy += (b - my) * (b - my);
  }
  CHECK(std::abs(mx) <= 1e-9);
  CHECK(std::abs(my) <= 1e-9);
  CHECK(vx >= vy);
  CHECK(pca2d(x) == p);
}

TEST_CASE("linear probe on separable and shuffled labels") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  const int k = 3;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 600; ++i) {
    const int c = i % k;
    std::vector<double> v(16);
    for (auto& e : v) e = n01(rng);
    v[c] += 8.0;
    x.push_back(v);
    y.push_back(c);
  }
  auto r = linear_probe(x, y, 0.5, 1);
  CHECK(r.accuracy == 1.0);
  CHECK(r.train == 300);
  CHECK(r.test == 300);

  std::vector<std::vector<double>> noise;
  for (int i = 0; i < 600; ++i) {
    std::vector<double> v(16);
    for (auto& e : v) e = n01(rng);
    noise.push_back(v);
  }
  auto s = linear_probe(noise, y, 0.5, 1);
  CHECK(s.accuracy < 0.5);
  CHECK(s.accuracy > 1.0 / k - 0.12);
  CHECK_THROWS_AS(linear_probe(x, std::vector<int>(3, 0)), std::invalid_argument);
}

TEST_CASE("evaluate report invariants") {
  StyleCapModel<float> model(toy::arch(2));
  auto s = spec();
  std::vector<Words> words = {w("happy dog sits"), w("sad dog sits"), w("dog sits grass")};
  Vocab vocab = Vocab::build(words);
  REQUIRE(vocab.size() <= 10);

  std::mt19937_64 rng(4);
  std::normal_distribution<float> n01;
  std::vector<VisionItem> test;
  for (int i = 0; i < 3; ++i) {
    VisualFeature f(2, 4);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 4; ++c) f(r, c) = n01(rng);
    test.push_back({"v" + std::to_string(i), words[2], f});
  }
  std::vector<TokenSeq> refs = {vocab.encode(words[2])};
  EvalInputs in;
  in.test = test;
  in.examples[0] = {vocab.encode(words[0])};
  in.examples[1] = {vocab.encode(words[1])};
  in.factual_refs = refs;
  in.spec = &s;
  in.vocab = &vocab;
  auto lm = train_ngram_lm(refs, 2, 1.0, vocab.size());
  in.lm = &lm;

  const std::vector<double> lambdas = {0.0, 1.0, 2.0};
  auto rep = evaluate(model, in, lambdas);
  REQUIRE(rep.rows.size() == 3);
  REQUIRE(rep.details.size() == 1 + 2 * 3);
  const auto& factual = rep.details[0];
  CHECK(factual.style == "factual");
  for (std::size_t i = 1; i <= 2; ++i) {
    CHECK(rep.details[i].lambda == 0.0);
    CHECK(rep.details[i].bleu3 == factual.bleu3);
    CHECK(rep.details[i].content == factual.content);
    CHECK(rep.details[i].ppl == factual.ppl);
  }
  double best = -1.0;
  for (const auto& r : rep.rows) {
    CHECK(r.gm1 == doctest::Approx(std::sqrt(100 * r.sacc * 100 * r.bleu3)));
    CHECK(r.gm2 == doctest::Approx(std::sqrt(100 * r.sacc * r.content)));
    CHECK(r.content >= 0.0);
    CHECK(r.content <= 100.0);
    best = std::max(best, r.gm1);
  }
  auto it = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const EvalRow& r) { return r.gm1 == best; });
  CHECK(rep.best_lambda == it->lambda);

  auto again = evaluate(model, in, lambdas);
  std::ostringstream a, b;
  write_report_tsv(a, rep.details);
  write_report_tsv(b, again.details);
  CHECK(a.str() == b.str());
  CHECK(report_summary(rep).to_string() == report_summary(again).to_string());
}
