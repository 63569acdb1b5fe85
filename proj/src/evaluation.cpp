// SPDX-License-Identifier: Apache-2.0
#include "fscap/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace fscap {

double style_accuracy(std::span<const text::Words> sentences, int target, const text::SynthStyleSpec& spec) {
  if (sentences.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : sentences) hits += text::oracle_style(s, spec) == target;
  return static_cast<double>(hits) / static_cast<double>(sentences.size());
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const text::Words& w, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++out[std::vector<std::string>(w.begin() + i, w.begin() + i + n)];
  return out;
}

struct BleuStats {
  std::size_t matches[3] = {0, 0, 0};
  std::size_t totals[3] = {0, 0, 0};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;

  void add(const BleuStats& o) {
    for (int n = 0; n < 3; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    cand_len += o.cand_len;
    ref_len += o.ref_len;
  }
};

BleuStats bleu_stats(const text::Words& cand, std::span<const text::Words> refs) {
  BleuStats s;
  s.cand_len = cand.size();
  std::size_t best = 0;
  bool have = false;
  for (const auto& r : refs) {
    const auto diff = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
    if (!have || diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
    have = true;
  }
  s.ref_len = best;
  for (std::size_t n = 1; n <= 3; ++n) {
    auto c = ngrams(cand, n);
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
    }
    for (const auto& [g, k] : c) {
      s.totals[n - 1] += k;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) s.matches[n - 1] += std::min(k, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s) {
  if (s.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 3; ++n) {
    double p = 0.0;
    if (s.totals[n] == 0) {
      p = 1.0;  // (0 + 1) / (0 + 1)
    } else {
      if (s.matches[n] == 0) return 0.0;
      p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    }
    log_sum += std::log(p) / 3.0;
  }
  const double c = static_cast<double>(s.cand_len);
  const double r = static_cast<double>(s.ref_len);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

}  // namespace

double bleu3(const text::Words& candidate, std::span<const text::Words> references) {
  if (references.empty()) throw std::invalid_argument("bleu3: no references");
  return bleu_from_stats(bleu_stats(candidate, references));
}

double corpus_bleu3(std::span<const text::Words> candidates, std::span<const std::vector<text::Words>> references) {
  if (candidates.size() != references.size()) throw std::invalid_argument("corpus_bleu3: size mismatch");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total.add(bleu_stats(candidates[i], references[i]));
  return bleu_from_stats(total);
}

double geomean(double a, double b) {
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("geomean: negative factor");
  return std::sqrt(a * b);
}

template <typename T>
double content_score(const StyleCapModel<T>& model, std::span<const int> caption, const VisualFeature& x) {
  Tape<T> t(&model.params(), nullptr, false);
  const Matrix<T> a = t.value(t.mean_rows(model.encode_content(t, project(model, t, t.constant(x.template cast<T>())))));
  const Matrix<T> b = t.value(t.mean_rows(model.encode_content(t, caption)));
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.cols(); ++i) {
    ab += double(a(0, i)) * double(b(0, i));
    aa += double(a(0, i)) * double(a(0, i));
    bb += double(b(0, i)) * double(b(0, i));
  }
  if (!(aa > 0.0) || !(bb > 0.0)) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double content_percent(double cosine) { return 100.0 * (cosine + 1.0) / 2.0; }

// ---------------------------------------------------------------------------
// n-gram LM

NgramLM::NgramLM(std::size_t order, double alpha, std::size_t vocab_size)
    : order_(order), alpha_(alpha), vocab_(vocab_size) {
  if (order == 0) throw std::invalid_argument("NgramLM: order must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("NgramLM: alpha must be > 0");
  if (vocab_size == 0) throw std::invalid_argument("NgramLM: empty vocabulary");
}

std::vector<int> NgramLM::key(std::span<const int> context) const {
  const std::size_t n = order_ - 1;
  std::vector<int> k(n, text::kBos);
  const std::size_t take = std::min(n, context.size());
  std::copy(context.end() - static_cast<std::ptrdiff_t>(take), context.end(), k.end() - static_cast<std::ptrdiff_t>(take));
  return k;
}

void NgramLM::add(std::span<const int> sentence) {
  std::vector<int> seq(sentence.begin(), sentence.end());
  seq.push_back(text::kEos);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= vocab_) throw std::out_of_range("NgramLM: token id");
    auto k = key(std::span<const int>(seq.data(), i));
    counts_[k][seq[i]] += 1.0;
    totals_[k] += 1.0;
  }
}

double NgramLM::prob(std::span<const int> context, int w) const {
  if (w < 0 || static_cast<std::size_t>(w) >= vocab_) throw std::out_of_range("NgramLM: token id");
  const auto k = key(context);
  double c = 0.0, total = 0.0;
  if (auto it = counts_.find(k); it != counts_.end()) {
    if (auto jt = it->second.find(w); jt != it->second.end()) c = jt->second;
    total = totals_.at(k);
  }
  return (c + alpha_) / (total + alpha_ * static_cast<double>(vocab_));
}

double NgramLM::log_prob_sentence(std::span<const int> sentence) const {
  std::vector<int> seq(sentence.begin(), sentence.end());
  seq.push_back(text::kEos);
  double lp = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) lp += std::log(prob(std::span<const int>(seq.data(), i), seq[i]));
  return lp;
}

double NgramLM::perplexity(std::span<const text::TokenSeq> sentences) const {
  double lp = 0.0;
  std::size_t k = 0;
  for (const auto& s : sentences) {
    lp += log_prob_sentence(s);
    k += s.size() + 1;
  }
  if (k == 0) throw std::invalid_argument("perplexity: nothing to score");
  return std::exp(-lp / static_cast<double>(k));
}

NgramLM train_ngram_lm(std::span<const text::TokenSeq> corpus, std::size_t order, double alpha,
                       std::size_t vocab_size) {
  NgramLM lm(order, alpha, vocab_size);
  for (const auto& s : corpus) lm.add(s);
  return lm;
}

// ---------------------------------------------------------------------------
// PCA and probe

std::vector<std::pair<double, double>> pca2d(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) return {};
  const auto n = static_cast<Eigen::Index>(vectors.size());
  const auto d = static_cast<Eigen::Index>(vectors[0].size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(vectors[i].size()) != d) throw std::invalid_argument("pca2d: ragged input");
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = vectors[i][j];
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = (x.transpose() * x) / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(d, 2);
  for (int k = 0; k < 2 && k < d; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    dirs.col(k) = v;
  }
  Eigen::MatrixXd proj = x * dirs;
  std::vector<std::pair<double, double>> out(vectors.size());
  for (Eigen::Index i = 0; i < n; ++i) out[i] = {proj(i, 0), proj(i, 1)};
  return out;
}

ProbeResult linear_probe(std::span<const std::vector<double>> vectors, std::span<const int> labels,
                         double train_fraction, std::uint64_t seed, std::size_t iterations) {
  if (vectors.size() != labels.size() || vectors.size() < 2) throw std::invalid_argument("linear_probe: bad input");
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const auto c = static_cast<Eigen::Index>(classes.size());
  const auto d = static_cast<Eigen::Index>(vectors[0].size());
  auto class_of = [&](int label) {
    return static_cast<Eigen::Index>(std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
  };

  std::vector<std::size_t> order(vectors.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train =
      std::clamp<std::size_t>(static_cast<std::size_t>(train_fraction * vectors.size()), 1, vectors.size() - 1);

  auto rows = [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(end - begin), d);
    for (std::size_t i = begin; i < end; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i - begin), j) = vectors[order[i]][j];
    return m;
  };
  Eigen::MatrixXd xtr = rows(0, n_train);
  Eigen::MatrixXd xte = rows(n_train, vectors.size());
  Eigen::RowVectorXd mean = xtr.colwise().mean();
  Eigen::RowVectorXd sd = ((xtr.rowwise() - mean).array().square().colwise().sum() / double(n_train)).sqrt();
  for (Eigen::Index j = 0; j < d; ++j) sd(j) = sd(j) > 1e-12 ? sd(j) : 1.0;
  xtr = (xtr.rowwise() - mean).array().rowwise() / sd.array();
  xte = (xte.rowwise() - mean).array().rowwise() / sd.array();

  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(xtr.rows(), c);
  for (std::size_t i = 0; i < n_train; ++i) y(static_cast<Eigen::Index>(i), class_of(labels[order[i]])) = 1.0;

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, c);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(c);
  const double lr = 0.5, l2 = 1e-4;
  for (std::size_t it = 0; it < iterations; ++it) {
    Eigen::MatrixXd z = (xtr * w).rowwise() + b;
    Eigen::VectorXd mx = z.rowwise().maxCoeff();
    Eigen::MatrixXd p = (z.colwise() - mx).array().exp();
    p = p.array().colwise() / p.rowwise().sum().array();
    Eigen::MatrixXd g = (p - y) / static_cast<double>(n_train);
    w -= lr * (xtr.transpose() * g + l2 * w);
    b -= lr * g.colwise().sum();
  }
  Eigen::MatrixXd z = (xte * w).rowwise() + b;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    correct += classes[static_cast<std::size_t>(arg)] == labels[order[n_train + static_cast<std::size_t>(i)]];
  }
  return ProbeResult{static_cast<double>(correct) / static_cast<double>(z.rows()), n_train,
                     static_cast<std::size_t>(z.rows())};
}

// ---------------------------------------------------------------------------
// Reports

namespace {

EvalRow score_captions(const StyleCapModel<float>& model, const EvalInputs& in, const std::string& style, int target,
                       double lambda, const Matrix<float>& s) {
  std::vector<text::Words> outputs;
  std::vector<text::TokenSeq> ids;
  std::vector<std::vector<text::Words>> refs;
  double content = 0.0;
  for (const auto& item : in.test) {
    auto out = caption(model, item.feature, s);
    content += content_percent(content_score(model, out, item.feature));
    outputs.push_back(in.vocab->decode(out));
    ids.push_back(std::move(out));
    refs.push_back({item.caption});
  }
  EvalRow r;
  r.style = style;
  r.data = in.data;
  r.lambda = lambda;
  r.count = in.test.size();
  r.bleu3 = corpus_bleu3(outputs, refs);
  r.content = in.test.empty() ? 0.0 : content / static_cast<double>(in.test.size());
  r.sacc = style_accuracy(outputs, target, *in.spec);
  r.gm1 = geomean(100.0 * r.sacc, 100.0 * r.bleu3);
  r.gm2 = geomean(100.0 * r.sacc, r.content);
  r.ppl = in.lm ? in.lm->perplexity(ids) : 0.0;
  return r;
}

}  // namespace

EvalReport evaluate(const StyleCapModel<float>& model, const EvalInputs& in, std::span<const double> lambdas) {
  if (!in.spec || !in.vocab) throw std::invalid_argument("evaluate: missing spec or vocabulary");
  if (in.test.empty()) throw std::invalid_argument("evaluate: empty test split");
  if (in.examples.empty()) throw std::invalid_argument("evaluate: no style examples");
  const Matrix<float> s_src = source_style(model, in.factual_refs);

  EvalReport report;
  report.details.push_back(score_captions(model, in, "factual", text::kFactualStyle, 0.0, s_src));
  std::map<int, Matrix<float>> targets;
  for (const auto& [style, ex] : in.examples) targets[style] = target_style(model, std::span<const text::TokenSeq>(ex));

  double best = -1.0;
  for (double lambda : lambdas) {
    EvalRow macro;
    macro.style = "all";
    macro.data = in.data;
    macro.lambda = lambda;
    for (const auto& [style, s_tgt] : targets) {
      auto row = score_captions(model, in, in.spec->style_name(style), style, lambda, style_delta(s_tgt, s_src, lambda));
      macro.bleu3 += row.bleu3;
      macro.content += row.content;
      macro.sacc += row.sacc;
      macro.ppl += row.ppl;
      macro.count += row.count;
      report.details.push_back(row);
    }
    const double k = static_cast<double>(targets.size());
    macro.bleu3 /= k;
    macro.content /= k;
    macro.sacc /= k;
    macro.ppl /= k;
    macro.gm1 = geomean(100.0 * macro.sacc, 100.0 * macro.bleu3);
    macro.gm2 = geomean(100.0 * macro.sacc, macro.content);
    if (macro.gm1 > best) {
      best = macro.gm1;
      report.best_lambda = lambda;
    }
    report.rows.push_back(macro);
  }
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_report_tsv(std::ostream& out, std::span<const EvalRow> rows) {
  out << "style\tdata\tlambda\tB-3\tcontent\tsACC\tGM1\tGM2\tPPL\tcount\n";
  for (const auto& r : rows) {
    out << r.style << '\t' << r.data << '\t' << KeyValueFile::format_number(r.lambda) << '\t' << fixed(100 * r.bleu3, 2)
        << '\t' << fixed(r.content, 2) << '\t' << fixed(100 * r.sacc, 2) << '\t' << fixed(r.gm1, 2) << '\t'
        << fixed(r.gm2, 2) << '\t' << fixed(r.ppl, 3) << '\t' << r.count << '\n';
  }
}

KeyValueFile report_summary(const EvalReport& report) {
  KeyValueFile kv;
  kv.set_number("best_lambda", report.best_lambda);
  auto put = [&](const std::string& prefix, const EvalRow& r) {
    kv.set_number(prefix + ".bleu3", r.bleu3);
    kv.set_number(prefix + ".content", r.content);
    kv.set_number(prefix + ".sacc", r.sacc);
    kv.set_number(prefix + ".gm1", r.gm1);
    kv.set_number(prefix + ".gm2", r.gm2);
    kv.set_number(prefix + ".ppl", r.ppl);
    kv.set_number(prefix + ".count", r.count);
  };
  for (const auto& r : report.details) {
    if (r.style == "factual") put("factual", r);
  }
  for (const auto& r : report.rows) put("lambda." + KeyValueFile::format_number(r.lambda), r);
  for (const auto& r : report.details) {
    if (r.style != "factual") put("style." + r.style + ".lambda." + KeyValueFile::format_number(r.lambda), r);
  }
  return kv;
}

std::pair<std::size_t, std::size_t> content_overlap(const text::Words& source, const text::Words& output,
                                                    const text::SynthStyleSpec& spec) {
  const auto words = spec.content_words();
  auto is_content = [&](const std::string& w) { return std::find(words.begin(), words.end(), w) != words.end(); };
  std::unordered_map<std::string, std::size_t> avail;
  for (const auto& w : output) ++avail[w];
  std::size_t matched = 0, total = 0;
  for (const auto& w : source) {
    if (!is_content(w)) continue;
    ++total;
    if (auto it = avail.find(w); it != avail.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return {matched, total};
}

TransferResult evaluate_transfer(const StyleCapModel<float>& model, std::span<const text::TokenSeq> sentences,
                                 const std::map<int, std::vector<text::TokenSeq>>& examples,
                                 std::span<const text::TokenSeq> factual_refs, double lambda,
                                 const text::SynthStyleSpec& spec, const text::Vocab& vocab) {
  const Matrix<float> s_src = source_style(model, factual_refs);
  std::map<int, Matrix<float>> styles;
  for (const auto& [k, ex] : examples) {
    if (k == text::kFactualStyle) continue;
    styles[k] = style_delta(target_style(model, std::span<const text::TokenSeq>(ex)), s_src, lambda);
  }
  TransferResult r;
  std::size_t hits = 0, matched = 0, total = 0;
  for (const auto& s : sentences) {
    const auto src_words = vocab.decode(s);
    const int own = text::oracle_style(src_words, spec);
    for (const auto& [k, vec] : styles) {
      if (k == own) continue;
      auto out = vocab.decode(transfer(model, s, vec));
      hits += text::oracle_style(out, spec) == k;
      auto [m, t] = content_overlap(src_words, out, spec);
      matched += m;
      total += t;
      ++r.count;
      r.outputs.push_back(std::move(out));
    }
  }
  r.style_accuracy = r.count ? static_cast<double>(hits) / static_cast<double>(r.count) : 0.0;
  r.content_retention = total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
  return r;
}

template double content_score<float>(const StyleCapModel<float>&, std::span<const int>, const VisualFeature&);
template double content_score<double>(const StyleCapModel<double>&, std::span<const int>, const VisualFeature&);

}  // namespace fscap
