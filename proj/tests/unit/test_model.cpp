// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "fscap/model.hpp"
#include "fscap/optimizer.hpp"
#include "toy_model.hpp"

using namespace fscap;
using fdtest::random_matrix;

namespace {

std::vector<Param<double>> group_params(const ParamStore<double>& s, std::string_view g) {
  std::vector<Param<double>> out;
  for (auto idx : s.group(g).members) out.push_back(s.params()[idx]);
  return out;
}

}  // namespace

TEST_CASE("init is deterministic and E_s starts as a copy of E_c") {
  StyleCapModel<double> a(toy::arch(3)), b(toy::arch(3)), c(toy::arch(4));
  CHECK(a.params() == b.params());
  CHECK(!(a.params() == c.params()));
  auto es = group_params(a.params(), group::kStyle);
  auto ec = group_params(a.params(), group::kContent);
  REQUIRE(es.size() == ec.size());
  for (std::size_t i = 0; i < es.size(); ++i) CHECK(es[i].value == ec[i].value);
}

TEST_CASE("invalid dims are rejected") {
  auto a = toy::arch();
  a.model.d_model = 63;
  a.model.heads = 4;
  CHECK_THROWS_AS(StyleCapModel<double>{a}, std::invalid_argument);
  a = toy::arch();
  a.discriminator.temperature = 0.0;
  CHECK_THROWS_AS(StyleCapModel<double>{a}, std::invalid_argument);
}

TEST_CASE("architecture key-value round trip") {
  KeyValueFile kv;
  toy::arch(9).write(kv);
  auto back = Architecture::from_keyvalue(kv);
  CHECK(back.model.d_model == 8);
  CHECK(back.model.seed == 9);
  CHECK(back.projection.const_slots == 2);
  CHECK(back.discriminator.temperature == 0.1);
}

TEST_CASE("encoder shapes") {
  StyleCapModel<double> m(toy::arch());
  Tape<double> t(&m.params());
  const int ids[] = {5, 6, 7};
  CHECK(t.value(m.encode_content(t, ids)).rows() == 3);
  CHECK(t.value(m.encode_content(t, std::span<const int>{})).rows() == 1);
  std::mt19937_64 rng(1);
  Var slots = t.constant(random_matrix(2, 8, rng));
  CHECK(t.value(m.encode_content(t, slots)).rows() == 2);
  CHECK_THROWS_AS(m.encode_content(t, t.constant(Matrix<double>(2, 7))), std::invalid_argument);
  CHECK_THROWS_AS(m.extract_style(t, std::span<const int>{}), std::invalid_argument);
}

TEST_CASE("extract_style is the mean of the hidden states") {
  StyleCapModel<double> m(toy::arch());
  Tape<double> t(&m.params());
  const int one[] = {6};
  CHECK(t.value(m.extract_style(t, one)) == t.value(m.style_states(t, one)));
  const int two[] = {6, 8};
  const auto h = t.value(m.style_states(t, two));
  const auto s = t.value(m.extract_style(t, two));
  for (std::size_t c = 0; c < 8; ++c) CHECK(s(0, c) == doctest::Approx((h(0, c) + h(1, c)) / 2).epsilon(1e-14));
}

TEST_CASE("fuse arithmetic") {
  Tape<double> t;
  Var c = t.constant(Matrix<double>(1, 2, std::vector<double>{1, 2}));
  Var s = t.constant(Matrix<double>(1, 2, std::vector<double>{3, 4}));
  CHECK(t.value(fuse(t, c, s)) == Matrix<double>(1, 2, std::vector<double>{4, 6}));
  CHECK(t.value(fuse(t, c, t.constant(Matrix<double>(1, 2)))) == t.value(c));
  Var c2 = t.constant(Matrix<double>(3, 2, std::vector<double>{1.5, -2, 0.25, 3, 7, -0.125}));
  Var s2 = t.constant(Matrix<double>(1, 2, std::vector<double>{0.5, -0.25}));
  CHECK(t.value(fuse(t, fuse(t, c2, s2), t.scale(s2, -1.0))) == t.value(c2));
}

TEST_CASE("zero style leaves decoding unchanged exactly") {
  StyleCapModel<double> m(toy::arch());
  Tape<double> t(&m.params());
  const int src[] = {5, 6};
  const int prefix[] = {text::kBos, 7, 8};
  Var c = m.encode_content(t, src);
  Var a = m.decode_logits(t, c, prefix);
  Var b = m.decode_logits(t, fuse(t, c, t.constant(Matrix<double>(1, 8))), prefix);
  CHECK(t.value(a) == t.value(b));
}

TEST_CASE("decoder is causal") {
  StyleCapModel<double> m(toy::arch());
  const int src[] = {5, 6};
  Tape<double> t(&m.params());
  Var mem = m.encode_content(t, src);
  const int p1[] = {text::kBos, 7, 8, 9};
  const int p2[] = {text::kBos, 7, 5, 6};
  const auto a = t.value(m.decode_logits(t, mem, p1));
  const auto b = t.value(m.decode_logits(t, mem, p2));
  CHECK(a.rows() == 4);
  CHECK(a.cols() == 10);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 10; ++c) CHECK(a(r, c) == b(r, c));
  bool changed = false;
  for (std::size_t c = 0; c < 10; ++c) changed |= a(2, c) != b(2, c);
  CHECK(changed);
}

TEST_CASE("sequence cross entropy") {
  Tape<double> t;
  const int targets[] = {5, 6, 2};
  CHECK(t.scalar(sequence_cross_entropy(t, t.constant(Matrix<double>(3, 10)), targets)) ==
        doctest::Approx(3 * std::log(10.0)).epsilon(1e-12));
  Matrix<double> sharp(3, 10, -1e4);
  sharp(0, 5) = sharp(1, 6) = sharp(2, 2) = 1e4;
  CHECK(t.scalar(sequence_cross_entropy(t, t.constant(sharp), targets)) < 1e-12);
  Matrix<double> hand(2, 3, std::vector<double>{0.0, 1.0, 2.0, 1.0, 0.0, 0.0});
  const int ht[] = {2, 0};
  const double l0 = -std::log(std::exp(2.0) / (1 + std::exp(1.0) + std::exp(2.0)));
  const double l1 = -std::log(std::exp(1.0) / (std::exp(1.0) + 2));
  CHECK(t.scalar(sequence_cross_entropy(t, t.constant(hand), ht)) == doctest::Approx(l0 + l1).epsilon(1e-14));
  const int padded[] = {2, -1};
  CHECK(t.scalar(sequence_cross_entropy(t, t.constant(hand), padded)) == doctest::Approx(l0).epsilon(1e-14));
}

TEST_CASE("decoder targets and inputs") {
  const int w[] = {7, 8};
  CHECK(decoder_input(w) == text::TokenSeq{text::kBos, 7, 8});
  CHECK(decoder_target(w) == text::TokenSeq{7, 8, text::kEos});
}

TEST_CASE("gradients of the full text path match finite differences") {
  StyleCapModel<double> m(toy::arch(5));
  const int content[] = {5, 6, 7};
  const int style[] = {8, 9};
  auto in = decoder_input(content);
  auto tgt = decoder_target(content);
  auto loss = [&](Tape<double>& t) {
    Var fused = fuse(t, m.encode_content(t, content), m.extract_style(t, style));
    return sequence_cross_entropy(t, m.decode_logits(t, fused, in), tgt);
  };
  m.set_frozen(group::kProjection, true);
  m.set_frozen(group::kDiscriminator, true);
  auto r = fdtest::check_params(m.params(), loss);
  CHECK(r.checked > 0);
  CHECK(r.worst <= 1e-5);
}

TEST_CASE("gradients with respect to visual slot inputs") {
  StyleCapModel<double> m(toy::arch(6));
  std::mt19937_64 rng(3);
  const int in[] = {text::kBos, 5};
  auto build = [&](Tape<double>& t, const std::vector<Var>& v) {
    return m.decode_logits(t, m.encode_content(t, v[0]), in);
  };
  CHECK(fdtest::check_inputs(build, {random_matrix(2, 8, rng)}, 1e-6, 5, &m.params()) <= 1e-5);
}

TEST_CASE("greedy decode") {
  StyleCapModel<double> m(toy::arch(7));
  Tape<double> t(&m.params(), nullptr, false);
  const int src[] = {5, 6};
  Matrix<double> mem = t.value(m.encode_content(t, src));

  auto seq = m.greedy_decode(mem, 6);
  CHECK(seq == m.greedy_decode(mem, 6));
  CHECK(seq.size() <= 6);

  text::TokenSeq prefix{text::kBos};
  for (int step = 0; step < 6; ++step) {
    Tape<double> s(&m.params(), nullptr, false);
    const auto& lg = s.value(m.decode_logits(s, s.constant(mem), prefix));
    auto last = lg.row(lg.rows() - 1);
    int best = 0;
    for (int j = 1; j < 10; ++j)
      if (last[j] > last[best]) best = j;
    if (best == text::kEos) break;
    prefix.push_back(best);
  }
  CHECK(seq == text::TokenSeq(prefix.begin() + 1, prefix.end()));

  auto& out = m.params()[m.ids().gen_out.bias].value;
  out(0, text::kEos) = 1e6;
  CHECK(m.greedy_decode(mem, 6).empty());
}

TEST_CASE("frozen groups are untouched by the optimizer") {
  StyleCapModel<double> m(toy::arch(8));
  CHECK_THROWS_AS(m.set_frozen("nope", true), std::invalid_argument);
  m.set_frozen(group::kStyle, true);
  auto before_s = group_params(m.params(), group::kStyle);
  auto before_g = group_params(m.params(), group::kGenerator);
  Adam<double> opt(m.params(), AdamConfig{});
  const int content[] = {5, 6, 7};
  const int style[] = {8, 9};
  for (int i = 0; i < 10; ++i) {
    Gradients<double> g(m.params());
    Tape<double> t(&m.params(), &g);
    Var fused = fuse(t, m.encode_content(t, content), m.extract_style(t, style));
    t.backward(sequence_cross_entropy(t, m.decode_logits(t, fused, decoder_input(content)), decoder_target(content)));
    opt.step(m.params(), g);
  }
  auto after_s = group_params(m.params(), group::kStyle);
  for (std::size_t i = 0; i < after_s.size(); ++i) CHECK(after_s[i].value == before_s[i].value);
  auto after_g = group_params(m.params(), group::kGenerator);
  bool changed = false;
  for (std::size_t i = 0; i < after_g.size(); ++i) changed |= !(after_g[i].value == before_g[i].value);
  CHECK(changed);
}
