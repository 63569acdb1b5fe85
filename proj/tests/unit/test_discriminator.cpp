// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fd_oracle.hpp"
#include "fscap/discriminator.hpp"
#include "toy_model.hpp"

using namespace fscap;
using fdtest::random_matrix;

TEST_CASE("one-hot soft input equals the hard embedding") {
  StyleCapModel<double> m(toy::arch());
  const int ids[] = {5, 7, 9};
  Tape<double> t(&m.params());
  Matrix<double> probs(3, 10);
  for (int i = 0; i < 3; ++i) probs(i, ids[i]) = 1.0;
  const auto hard = t.value(embed_style(m, t, ids));
  const auto soft = t.value(embed_style_soft(m, t, t.constant(probs)));
  CHECK(hard.cols() == 8);
  CHECK(hard == soft);
  CHECK_THROWS_AS(embed_style(m, t, std::span<const int>{}), std::invalid_argument);
}

TEST_CASE("soft embedding gradient matches finite differences") {
  StyleCapModel<double> m(toy::arch(2));
  std::mt19937_64 rng(4);
  auto build = [&](Tape<double>& t, const std::vector<Var>& v) { return embed_style_soft(m, t, t.softmax_rows(v[0])); };
  CHECK(fdtest::check_inputs(build, {random_matrix(3, 10, rng)}, 1e-6, 5, &m.params()) <= 1e-5);
}

TEST_CASE("similarity") {
  StyleCapModel<double> m(toy::arch(3));
  const int a[] = {5, 6};
  const int b[] = {8, 9, 7};
  CHECK(similarity(m, a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(similarity(m, a, b) == similarity(m, b, a));
  CHECK(std::abs(similarity(m, a, b)) <= 1.0);
}

TEST_CASE("info_nce special cases") {
  Tape<double> t;
  Matrix<double> same(2, 2, std::vector<double>{1, 0, 1, 0});
  CHECK(t.scalar(info_nce(t, t.constant(same), t.constant(same), 0.1)) == doctest::Approx(std::log(2.0)));

  Matrix<double> e(2, 2, std::vector<double>{1, 0, -1, 0});
  CHECK(t.scalar(info_nce(t, t.constant(e), t.constant(e), 0.01)) < 1e-12);

  Matrix<double> a(3, 2, std::vector<double>{1, 0, 0, 1, 0.6, 0.8});
  Matrix<double> p(3, 2, std::vector<double>{0.8, 0.6, 0, 1, -1, 0});
  const double tau = 0.5;
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    double z = 0.0, own = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double s = std::exp((a(i, 0) * p(j, 0) + a(i, 1) * p(j, 1)) / tau);
      z += s;
      if (i == j) own = s;
    }
    expect += -std::log(own / z) / 3.0;
  }
  CHECK(t.scalar(info_nce(t, t.constant(a), t.constant(p), tau)) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(info_nce(t, t.constant(Matrix<double>(1, 2, 1.0)), t.constant(Matrix<double>(1, 2, 1.0)), 0.1),
                  std::invalid_argument);
}

TEST_CASE("style loss special cases") {
  StyleCapModel<double> m(toy::arch(4));
  Tape<double> t(&m.params());
  const int donor[] = {6, 7};
  Matrix<double> probs(2, 10);
  probs(0, 6) = probs(1, 7) = 1.0;
  Var soft = t.constant(probs);
  CHECK(t.scalar(style_loss(m, t, soft, donor, {}, 0.1)) == 0.0);
  const std::vector<text::TokenSeq> twin = {{6, 7}};
  CHECK(t.scalar(style_loss(m, t, soft, donor, twin, 0.1)) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  auto probs_d = style_match_probabilities(m, donor, std::vector<text::TokenSeq>{{6, 7}, {8, 9}, {5}}, 0.1);
  CHECK(std::accumulate(probs_d.begin(), probs_d.end(), 0.0) == doctest::Approx(1.0));
  for (double p : probs_d) CHECK((p > 0.0 && p <= 1.0));
}

TEST_CASE("precomputed style loss matches the direct form") {
  StyleCapModel<double> m(toy::arch(5));
  std::mt19937_64 rng(5);
  Matrix<double> logits = random_matrix(3, 10, rng);
  const text::TokenSeq donor = {6, 7};
  const std::vector<text::TokenSeq> negs = {{8, 9}, {5, 5, 5}};
  Tape<double> t(&m.params());
  Var probs = t.softmax_rows(t.constant(logits));
  const double direct = t.scalar(style_loss(m, t, probs, donor, negs, 0.1));
  std::vector<text::TokenSeq> cands = {negs[0], donor, negs[1]};
  const double pre = t.scalar(style_loss_precomputed(m, t, probs, candidate_embeddings(m, cands), 1, 0.1));
  CHECK(pre == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("discriminator training separates styles") {
  text::SynthStyleSpec spec;
  spec.styles = {{"positive", {"happy", "lovely", "great"}}, {"negative", {"sad", "ugly", "awful"}}};
  spec.subjects = {"dog", "cat", "man", "girl"};
  spec.verbs = {"sits", "runs", "stands"};
  spec.preps = {"on", "near"};
  spec.objects = {"grass", "bench", "road", "beach"};
  spec.attributes = {"red", "small"};
  spec.paragraphs_per_style = 60;
  spec.factual_paragraphs = 0;
  auto corpus = text::gen_synthetic_corpus(spec, 1);
  std::vector<text::Words> all;
  for (auto& p : corpus)
    for (auto& s : p.sentences) all.push_back(s);
  auto vocab = text::Vocab::build(all);

  auto arch = toy::arch(11);
  arch.model.vocab_size = vocab.size();
  arch.discriminator.d_model = 16;
  StyleCapModel<float> m(arch);
  std::vector<std::vector<text::TokenSeq>> paras;
  for (auto& p : corpus) {
    paras.emplace_back();
    for (auto& s : p.sentences) paras.back().push_back(vocab.encode(s));
  }
  DiscriminatorTrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.lr = 3e-3;
  auto before = m.params();
  auto log = train_discriminator(m, paras, cfg);
  REQUIRE(log.size() > 20);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 10; ++i) head += log[i].loss / 10;
  for (std::size_t i = log.size() - 10; i < log.size(); ++i) tail += log[i].loss / 10;
  CHECK(tail < head);

  for (const auto& g : m.params().groups()) CHECK(!g.frozen);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = m.params().params()[i];
    if (p.name.rfind("D.", 0) != 0) CHECK(p.value == before.params()[i].value);
  }

  auto held = text::gen_synthetic_corpus(spec, 99);
  double same = 0, cross = 0;
  int ns = 0, nc = 0;
  for (std::size_t i = 0; i + 1 < held.size() && i < 40; ++i) {
    auto a = vocab.encode(held[i].sentences[0]);
    same += similarity(m, a, vocab.encode(held[i].sentences[1]));
    ++ns;
    for (std::size_t j = i + 1; j < held.size() && j < 40; ++j) {
      if (held[j].style == held[i].style) continue;
      cross += similarity(m, a, vocab.encode(held[j].sentences[0]));
      ++nc;
    }
  }
  CHECK(same / ns > cross / nc);
}
