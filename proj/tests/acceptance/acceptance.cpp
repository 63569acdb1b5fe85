// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every criterion passes.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fscap/binary_io.hpp"
#include "fscap/checkpoint.hpp"
#include "fscap/evaluation.hpp"
#include "fscap/inference.hpp"
#include "fscap/pipeline.hpp"
#include "fscap/training.hpp"

namespace fs = std::filesystem;
using namespace fscap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> g_results;

void report(int id, bool pass, const std::string& detail) {
  g_results.push_back({id, pass, detail});
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

void note(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

// ---------------------------------------------------------------------------
// Pipeline with optional reuse of finished stages.

struct Stages {
  DataSet data;
  Checkpoint disc, stage1, stage2;
  double stage1_seconds = 0.0;
};

Checkpoint train_or_load(const fs::path& dir, bool reuse, const std::function<Checkpoint()>& make) {
  if (reuse && fs::exists(dir / "manifest.txt")) return load_checkpoint(dir);
  auto c = make();
  save_checkpoint(dir, c);
  return load_checkpoint(dir);
}

Stages run_pipeline(const RunConfig& cfg, const fs::path& root, bool reuse, bool verbose) {
  Stages s;
  const auto data_dir = root / "data";
  if (!(reuse && fs::exists(data_dir / "vocab.txt"))) generate_data(cfg, data_dir);
  s.data = DataSet::load(data_dir);
  const auto logs = root / "logs";
  fs::create_directories(logs);

  s.disc = train_or_load(root / "checkpoints" / "discriminator", reuse, [&] {
    if (verbose) note("training discriminator");
    auto c = initial_checkpoint(cfg, s.data);
    std::ofstream log(logs / "discriminator.tsv");
    run_discriminator(c, cfg, s.data, &log);
    return c;
  });
  s.stage1 = train_or_load(root / "checkpoints" / "stage1", reuse, [&] {
    if (verbose) note("training stage 1");
    auto c = s.disc;
    std::ofstream log(logs / "stage1.tsv");
    const auto t0 = Clock::now();
    run_stage1(c, cfg, s.data, &log);
    s.stage1_seconds = seconds_since(t0);
    return c;
  });
  s.stage2 = train_or_load(root / "checkpoints" / "stage2", reuse, [&] {
    if (verbose) note("training stage 2");
    auto c = s.stage1;
    std::ofstream log(logs / "stage2.tsv");
    run_stage2(c, cfg, s.data, &log);
    return c;
  });
  return s;
}

// ---------------------------------------------------------------------------
// Criteria

void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto arch = grad_check_architecture();
  double worst32 = 0.0, worst64 = 0.0;
  std::size_t params = 0;
  bool ok = true;
  for (auto which : all_losses()) {
    const auto r32 = grad_check(which, arch, Precision::kF32);
    const auto r64 = grad_check(which, arch, Precision::kF64);
    worst32 = std::max(worst32, r32.max_rel_error);
    worst64 = std::max(worst64, r64.max_rel_error);
    params = r64.param_count;
    ok = ok && r32.checked > 0 && r64.checked > 0 && r32.max_rel_error <= 1e-3 && r64.max_rel_error <= 1e-5;
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0 && params <= 2000;
  report(1, ok,
         "gradient suite over " + std::to_string(all_losses().size()) + " losses, " + std::to_string(params) +
             " params: max rel err f32 " + num(worst32, 7) + " (<= 1e-3), f64 " + num(worst64, 9) + " (<= 1e-5), " +
             num(secs, 1) + " s (< 120)");
}

void criterion_geomean() {
  const double a = geomean(66.26, 79.10), b = geomean(62.8, 82.8), c = geomean(72.7, 82.8);
  const bool ok = std::abs(a - 72.40) <= 0.01 && std::abs(b - 72.1) <= 0.05 && std::abs(c - 77.6) <= 0.05;
  report(2, ok, "GM(66.26,79.10)=" + num(a, 3) + " vs 72.40, GM(62.8,82.8)=" + num(b, 3) + " vs 72.1, GM(72.7,82.8)=" +
                    num(c, 3) + " vs 77.6");
}

bool groups_equal(const StyleCapModel<float>& a, const StyleCapModel<float>& b, std::string_view group) {
  const auto& pa = a.params();
  const auto& pb = b.params();
  const auto gi = &pa.group(group) - pa.groups().data();
  bool any = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto& x = pa.params()[i];
    if (static_cast<std::ptrdiff_t>(x.group) != gi) continue;
    any = true;
    const auto& y = pb.params()[i];
    if (x.name != y.name || !x.value.same_shape(y.value)) return false;
    if (std::memcmp(x.value.data(), y.value.data(), x.value.size() * sizeof(float)) != 0) return false;
  }
  return any;
}

void criterion_identities(const Stages& s) {
  const auto& m = s.stage2.model;
  const auto& data = s.data;
  // lambda = 0 decoding equals s_src decoding.
  const auto examples = select_examples(data, 5);
  const auto s_src = source_style(m, std::span<const text::TokenSeq>(data.factual_refs));
  std::size_t same = 0, total = 0;
  for (const auto& [k, ex] : examples) {
    const auto s_tgt = target_style(m, std::span<const text::TokenSeq>(ex));
    const auto s0 = style_delta(s_tgt, s_src, 0.0);
    for (std::size_t i = 0; i < std::min<std::size_t>(50, data.vision_test.size()); ++i) {
      same += caption(m, data.vision_test[i].feature, s0) == caption(m, data.vision_test[i].feature, s_src);
      ++total;
    }
  }
  const bool lambda0 = same == total && total > 0;

  // fuse with a zero style is the identity.
  bool fuse_ok = true;
  {
    Tape<float> t(&m.params(), nullptr, false);
    const auto& ids = data.vision_test.empty() ? text::TokenSeq{4, 5} : data.vocab.encode(data.vision_test[0].caption);
    Var c = m.encode_content(t, ids);
    const Matrix<float> before = t.value(c);
    const Matrix<float> fused = t.value(fuse(t, c, t.constant(Matrix<float>(1, before.cols()))));
    fuse_ok = std::memcmp(before.data(), fused.data(), before.size() * sizeof(float)) == 0;
  }

  // E_s and D are untouched by stage 2.
  const bool frozen = groups_equal(s.stage1.model, s.stage2.model, group::kStyle) &&
                      groups_equal(s.stage1.model, s.stage2.model, group::kDiscriminator);

  // Mean-pool of one example is that example's style vector.
  bool single = true;
  for (const auto& [k, ex] : examples) {
    const std::vector<text::TokenSeq> one = {ex[0]};
    const auto pooled = target_style(m, std::span<const text::TokenSeq>(one));
    Tape<float> t(&m.params(), nullptr, false);
    const Matrix<float> direct = t.value(m.extract_style(t, ex[0]));
    single = single && std::memcmp(pooled.data(), direct.data(), direct.size() * sizeof(float)) == 0;
  }
  report(3, lambda0 && fuse_ok && frozen && single,
         "lambda=0 vs s_src decodes equal " + std::to_string(same) + "/" + std::to_string(total) + ", zero-style fuse " +
             (fuse_ok ? "exact" : "differs") + ", E_s/D across stage 2 " + (frozen ? "byte-identical" : "changed") +
             ", single-example mean " + (single ? "exact" : "differs"));
}

void criterion_stage1(const Stages& s, const RunConfig& cfg) {
  const auto r = run_transfer_eval(s.stage1.model, cfg, s.data);
  const bool timed = s.stage1_seconds > 0.0;
  const bool ok = r.style_accuracy >= 0.90 && r.content_retention >= 0.70 && (!timed || s.stage1_seconds <= 1200.0);
  report(4, ok,
         "text transfer over " + std::to_string(r.count) + " pairs (" + std::to_string(cfg.eval.examples) +
             " examples, lambda " + num(cfg.eval.transfer_lambda, 1) + "): style acc " + num(r.style_accuracy) +
             " (>= 0.90), content retention " + num(r.content_retention) + " (>= 0.70), stage-1 time " +
             (timed ? num(s.stage1_seconds, 0) + " s (<= 1200)" : std::string("reused")));
}

void criterion_probe(const Stages& s, const RunConfig& cfg, const fs::path& root) {
  const auto r = run_probe(s.stage1.model, cfg, s.data);
  std::ofstream out(root / "embed.tsv");
  out << "x\ty\tlabel\n";
  for (std::size_t i = 0; i < r.coords.size(); ++i)
    out << r.coords[i].first << '\t' << r.coords[i].second << '\t' << s.data.spec.style_name(r.labels[i]) << '\n';
  report(5, r.accuracy >= 0.95 && r.shuffled_accuracy <= 0.60,
         "linear probe on " + std::to_string(r.labels.size()) + " held-out style vectors: " + num(r.accuracy) +
             " (>= 0.95), label-shuffled " + num(r.shuffled_accuracy) + " (<= 0.60)");
}

EvalReport eval_stage2(const StyleCapModel<float>& m, const RunConfig& cfg, const DataSet& data, const fs::path& dir) {
  const auto r = run_caption_eval(m, cfg, data, data.vision_test, cfg.eval.lambdas, "test");
  fs::create_directories(dir);
  std::ofstream macro(dir / "report.tsv"), details(dir / "details.tsv");
  write_report_tsv(macro, r.rows);
  write_report_tsv(details, r.details);
  report_summary(r).save(dir / "summary.txt");
  return r;
}

const EvalRow& factual_row(const EvalReport& r) {
  for (const auto& d : r.details) {
    if (d.style == "factual") return d;
  }
  throw std::logic_error("report without factual row");
}

void criterion_stage2(const EvalReport& r) {
  const auto& f = factual_row(r);
  const EvalRow* hit = nullptr;
  for (const auto& row : r.rows) {
    if (row.sacc >= 0.80 && row.bleu3 >= 0.35 && (!hit || row.gm1 > hit->gm1)) hit = &row;
  }
  const EvalRow* best = nullptr;
  for (const auto& row : r.rows) {
    if (row.lambda == r.best_lambda) best = &row;
  }
  const EvalRow& shown = hit ? *hit : *best;
  report(6, f.bleu3 >= 0.5 && hit != nullptr,
         "factual BLEU-3 " + num(f.bleu3) + " (>= 0.5); stylized at lambda " + num(shown.lambda, 0) + ": sACC " +
             num(shown.sacc) + " (>= 0.80), BLEU-3 " + num(shown.bleu3) + " (>= 0.35); best-GM1 lambda " +
             num(r.best_lambda, 0));
}

struct AblationRow {
  std::string name;
  double factual_bleu = 0, bleu = 0, sacc = 0, gm1 = 0;
};

AblationRow summarize(const std::string& name, const EvalReport& r) {
  AblationRow a{name, factual_row(r).bleu3, 0, 0, 0};
  for (const auto& row : r.rows) {
    if (row.lambda == r.best_lambda) {
      a.bleu = row.bleu3;
      a.sacc = row.sacc;
      a.gm1 = row.gm1;
    }
  }
  return a;
}

void criterion_ablation(const Stages& s, const RunConfig& base, const EvalReport& full, const fs::path& root,
                        bool reuse, const std::vector<std::string>& rows) {
  std::vector<AblationRow> table = {summarize("full", full)};
  for (const auto& name : rows) {
    KeyValueFile kv = base.kv;
    const bool text_row = name == "dr" || name == "nbt" || name == "style";
    if (text_row) {
      kv.set("stage1.use_" + name, "false");
      kv.set("stage2.use_" + name, "false");
    } else if (name == "v2l") {
      kv.set("stage2.use_v2l", "false");
    } else {
      kv.set("stage2.multitask", "false");
    }
    const auto cfg = RunConfig::from_keyvalue(kv, base.base_dir);
    const auto dir = root / "ablate" / name;
    note("ablation " + name);
    auto ckpt = train_or_load(dir / "checkpoint", reuse, [&] {
      auto c = text_row ? s.disc : s.stage1;
      fs::create_directories(dir);
      if (text_row) {
        std::ofstream log(dir / "stage1.tsv");
        run_stage1(c, cfg, s.data, &log);
      }
      std::ofstream log(dir / "stage2.tsv");
      run_stage2(c, cfg, s.data, &log);
      return c;
    });
    table.push_back(summarize(name, eval_stage2(ckpt.model, cfg, s.data, dir)));
  }
  std::ofstream out(root / "ablation.tsv");
  out << "row\tfactual_B-3\tB-3\tsACC\tGM1\n";
  for (const auto& a : table)
    out << a.name << '\t' << num(100 * a.factual_bleu, 2) << '\t' << num(100 * a.bleu, 2) << '\t'
        << num(100 * a.sacc, 2) << '\t' << num(a.gm1, 2) << '\n';
  std::cerr << "[acceptance] ablation table (" << (root / "ablation.tsv").string() << ")\n";
  for (const auto& a : table)
    std::cerr << "  " << a.name << ": factual B-3 " << num(a.factual_bleu) << ", stylized B-3 " << num(a.bleu)
              << ", sACC " << num(a.sacc) << ", GM1 " << num(a.gm1, 2) << '\n';

  const auto it = std::find_if(table.begin(), table.end(), [](const AblationRow& a) { return a.name == "multitask"; });
  const bool ok = it != table.end() && it->factual_bleu < table[0].factual_bleu && it->bleu < table[0].bleu;
  report(7, ok,
         "frozen-LM ablation BLEU-3 factual " + num(it->factual_bleu) + " vs full " + num(table[0].factual_bleu) +
             ", stylized " + num(it->bleu) + " vs full " + num(table[0].bleu) + " (must be strictly lower)");
}

// Independent oracles for the metric checks.
double oracle_bleu3(const text::Words& cand, const text::Words& ref) {
  auto count = [](const text::Words& w, std::size_t n) {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      std::string g;
      for (std::size_t k = 0; k < n; ++k) g += w[i + k] + ' ';
      ++m[g];
    }
    return m;
  };
  double lp = 0.0;
  for (std::size_t n = 1; n <= 3; ++n) {
    auto c = count(cand, n), r = count(ref, n);
    int match = 0, tot = 0;
    for (auto& [g, k] : c) {
      tot += k;
      match += std::min(k, r.count(g) ? r[g] : 0);
    }
    if (tot == 0) continue;
    if (match == 0) return 0.0;
    lp += std::log(double(match) / tot) / 3.0;
  }
  const double bp = cand.size() > ref.size() ? 1.0 : std::exp(1.0 - double(ref.size()) / double(cand.size()));
  return bp * std::exp(lp);
}

void criterion_metrics() {
  const text::Words ref = {"a", "dog", "sits", "on", "the", "red", "grass", "."};
  const std::vector<text::Words> refs = {ref};
  const double perfect = bleu3(ref, refs);

  NgramLM uni(1, 1.0, 23);
  const std::vector<text::TokenSeq> some = {{4, 9, 11}, {7}};
  const double ppl = uni.perplexity(some);

  const text::Words cand = {"a", "dog", "sits", "near", "the", "grass", "."};
  const double hand = bleu3(cand, refs);
  const double hand_oracle = oracle_bleu3(cand, ref);

  // Bigram, alpha 1, |V| = 6, corpus {4 5}, {4}, {5 5}:
  //   c(BOS 4) = 2, c(BOS 5) = 1, c(BOS .) = 3; c(4 5) = 1, c(4 EOS) = 1, c(4 .) = 2;
  //   c(5 EOS) = 2, c(5 5) = 1, c(5 .) = 3.
  // Scoring {4 5}: p(4|BOS) = 3/9, p(5|4) = 2/8, p(EOS|5) = 3/9.
  const std::vector<text::TokenSeq> corpus = {{4, 5}, {4}, {5, 5}};
  const auto bi = train_ngram_lm(corpus, 2, 1.0, 6);
  const std::vector<text::TokenSeq> probe = {{4, 5}};
  const double bi_ppl = bi.perplexity(probe);
  const double bi_oracle = std::exp(-(std::log(3.0 / 9.0) + std::log(2.0 / 8.0) + std::log(3.0 / 9.0)) / 3.0);

  const bool ok = perfect == 1.0 && ppl == 23.0 && std::abs(hand - hand_oracle) <= 1e-9 &&
                  std::abs(bi_ppl - bi_oracle) <= 1e-9;
  report(8, ok,
         "BLEU-3 perfect " + num(perfect, 12) + ", uniform-unigram PPL " + num(ppl, 12) + " (|V| = 23), hand BLEU-3 " +
             num(hand, 12) + " vs oracle " + num(hand_oracle, 12) + ", bigram PPL " + num(bi_ppl, 12) + " vs oracle " +
             num(bi_oracle, 12));
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return files;
}

void run_small(const RunConfig& cfg, const fs::path& root) {
  fs::remove_all(root);
  auto s = run_pipeline(cfg, root, false, false);
  const auto r = run_caption_eval(s.stage2.model, cfg, s.data, s.data.vision_test, cfg.eval.lambdas, "test");
  std::ofstream macro(root / "report.tsv"), details(root / "details.tsv");
  write_report_tsv(macro, r.rows);
  write_report_tsv(details, r.details);
  report_summary(r).save(root / "summary.txt");
  fs::remove_all(root / "logs");
}

void criterion_determinism(const fs::path& config, const fs::path& work) {
  const auto cfg = RunConfig::load(config);
  run_small(cfg, work / "det_a");
  run_small(cfg, work / "det_b");
  const auto a = snapshot(work / "det_a"), b = snapshot(work / "det_b");
  std::size_t ckpts = 0, reports = 0, differ = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differ;
    if (name.find("checkpoints") != std::string::npos) ++ckpts;
    if (name.find(".tsv") != std::string::npos || name.find("summary") != std::string::npos) ++reports;
  }
  if (a.size() != b.size()) ++differ;
  report(9, differ == 0 && ckpts > 0 && reports > 0,
         "two seeded runs of " + config.filename().string() + ": " + std::to_string(a.size()) + " files (" +
             std::to_string(ckpts) + " checkpoint, " + std::to_string(reports) + " report), " +
             std::to_string(differ) + " differ");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  fs::path work = "acceptance_work";
  fs::path config = fs::path(FSCAP_SOURCE_DIR) / "configs" / "default.txt";
  fs::path small = fs::path(FSCAP_SOURCE_DIR) / "configs" / "smoke.txt";
  bool reuse = false;
  bool all_ablations = false;
  std::vector<int> only;
  app.add_option("--work", work, "Working directory");
  app.add_option("--config", config, "Run configuration");
  app.add_option("--small-config", small, "Configuration for the determinism run");
  app.add_flag("--reuse", reuse, "Reuse finished stages found in the working directory");
  app.add_flag("--all-ablations", all_ablations, "Also train the dr, nbt and style ablation rows");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  auto guarded = [&](int id, const std::function<void()>& f) {
    if (!wanted(id)) return;
    try {
      f();
    } catch (const std::exception& e) {
      report(id, false, std::string("error: ") + e.what());
    }
  };

  fs::create_directories(work);
  guarded(1, criterion_gradients);
  guarded(2, criterion_geomean);
  guarded(8, criterion_metrics);

  if (wanted(3) || wanted(4) || wanted(5) || wanted(6) || wanted(7)) {
    try {
      const auto cfg = RunConfig::load(config);
      const auto root = work / "full";
      const auto t0 = Clock::now();
      auto stages = run_pipeline(cfg, root, reuse, true);
      note("pipeline ready after " + num(seconds_since(t0), 0) + " s");
      guarded(3, [&] { criterion_identities(stages); });
      guarded(4, [&] { criterion_stage1(stages, cfg); });
      guarded(5, [&] { criterion_probe(stages, cfg, root); });
      if (wanted(6) || wanted(7)) {
        const auto full = eval_stage2(stages.stage2.model, cfg, stages.data, root / "eval");
        guarded(6, [&] { criterion_stage2(full); });
        std::vector<std::string> rows = {"multitask", "v2l"};
        if (all_ablations) rows.insert(rows.end(), {"dr", "nbt", "style"});
        guarded(7, [&] { criterion_ablation(stages, cfg, full, root, reuse, rows); });
      }
    } catch (const std::exception& e) {
      for (int id : {3, 4, 5, 6, 7}) {
        if (wanted(id)) report(id, false, std::string("pipeline error: ") + e.what());
      }
    }
  }
  guarded(9, [&] { criterion_determinism(small, work); });

  std::sort(g_results.begin(), g_results.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  std::size_t passed = 0;
  for (const auto& r : g_results) passed += r.pass;
  std::cout << "summary: " << passed << "/" << g_results.size() << " criteria passed" << std::endl;
  return passed == g_results.size() ? 0 : 1;
}
