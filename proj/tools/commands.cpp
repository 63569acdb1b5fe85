// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "fscap/binary_io.hpp"
#include "fscap/checkpoint.hpp"
#include "fscap/inference.hpp"
#include "fscap/pipeline.hpp"
#include "fscap/training.hpp"

namespace fscap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "fscap-0.1.0";

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunConfig load_config(const Options& opt) {
  if (!fs::exists(opt.config)) throw std::runtime_error("config file not found: " + opt.config.string());
  return RunConfig::load(opt.config, opt.seed);
}

class Manifest {
 public:
  Manifest(const Options& opt, const std::string& name) : name_(name) {
    doc_["command"] = opt.command;
    doc_["version"] = kVersion;
    doc_["started"] = utc_now();
    doc_["seed"] = opt.seed ? json(*opt.seed) : json(nullptr);
    doc_["checkpoints"] = json::object();
    doc_["outputs"] = json::array();
    if (!opt.config.empty()) doc_["config"] = opt.config.string();
  }

  void config(const RunConfig& cfg) {
    const auto text = cfg.kv.to_string();
    doc_["config_hash"] = sha256_hex(text);
    doc_["seed"] = cfg.kv.get_int("seed", 0);
  }
  void checkpoint(const std::string& role, const fs::path& p) { doc_["checkpoints"][role] = p.string(); }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }

  void write(const fs::path& out_dir) {
    doc_["finished"] = utc_now();
    fs::create_directories(out_dir / "manifests");
    io::atomic_write(out_dir / "manifests" / (name_ + ".json"), doc_.dump(2) + "\n");
  }

 private:
  std::string name_;
  json doc_;
};

fs::path data_dir(const Options& opt) { return opt.data.empty() ? opt.out / "data" : opt.data; }
fs::path ckpt_dir(const Options& opt, const std::string& name) { return opt.out / "checkpoints" / name; }

fs::path pick_checkpoint(const Options& opt, const std::string& fallback) {
  return opt.checkpoint.empty() ? ckpt_dir(opt, fallback) : opt.checkpoint;
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write file: " + p.string());
  return f;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  io::atomic_write(p, s);
}

std::vector<double> lambdas_for(const Options& opt, const RunConfig& cfg) {
  if (!opt.scan_lambda.empty()) return parse_lambda_range(opt.scan_lambda);
  if (opt.lambda) return {*opt.lambda};
  return cfg.eval.lambdas;
}

std::vector<text::TokenSeq> read_encoded(const fs::path& p, const text::Vocab& vocab) {
  if (!fs::exists(p)) throw std::runtime_error("file not found: " + p.string());
  std::vector<text::TokenSeq> out;
  for (const auto& s : text::read_sentences(p)) out.push_back(vocab.encode(s));
  if (out.empty()) throw std::runtime_error("no sentences in " + p.string());
  return out;
}

void train_command(const Options& opt, const std::string& stage) {
  const auto cfg = load_config(opt);
  Manifest m(opt, opt.command);
  m.config(cfg);
  const auto data = DataSet::load(data_dir(opt));

  Checkpoint ckpt;
  if (stage == "discriminator") {
    if (opt.checkpoint.empty()) {
      ckpt = initial_checkpoint(cfg, data);
    } else {
      ckpt = load_checkpoint(opt.checkpoint);
      m.checkpoint("input", opt.checkpoint);
    }
  } else {
    const auto in = pick_checkpoint(opt, stage == "stage1" ? "discriminator" : "stage1");
    ckpt = load_checkpoint(in);
    m.checkpoint("input", in);
  }
  if (!(ckpt.vocab == data.vocab)) throw std::runtime_error("checkpoint vocabulary does not match " + data_dir(opt).string());

  const auto log_path = opt.out / "logs" / (stage + ".tsv");
  auto log = open_out(log_path);
  if (stage == "discriminator") run_discriminator(ckpt, cfg, data, &log);
  if (stage == "stage1") run_stage1(ckpt, cfg, data, &log);
  if (stage == "stage2") run_stage2(ckpt, cfg, data, &log);

  const auto out = ckpt_dir(opt, stage);
  save_checkpoint(out, ckpt);
  m.checkpoint("output", out);
  m.output(log_path);
  m.write(opt.out);
  std::cout << out.string() << '\n';
}

Matrix<float> style_from(const Options& opt, const Checkpoint& ckpt) {
  const auto examples = read_encoded(opt.examples, ckpt.vocab);
  const auto refs = read_encoded(opt.refs.empty() ? data_dir(opt) / "factual_ref.txt" : opt.refs, ckpt.vocab);
  const auto s_tgt = target_style(ckpt.model, std::span<const text::TokenSeq>(examples));
  const auto s_src = source_style(ckpt.model, std::span<const text::TokenSeq>(refs));
  return style_delta(s_tgt, s_src, opt.lambda.value_or(1.0));
}

void caption_command(const Options& opt) {
  Manifest m(opt, opt.command);
  const auto in = pick_checkpoint(opt, "stage2");
  const auto ckpt = load_checkpoint(in);
  m.checkpoint("input", in);
  const auto style = style_from(opt, ckpt);
  const auto items = read_vision_split(opt.input.parent_path(), opt.input.filename().string());
  std::ostringstream out;
  for (const auto& item : items) out << item.id << '\t' << text::join(ckpt.vocab.decode(caption(ckpt.model, item.feature, style))) << '\n';
  const auto path = opt.out / "captions.tsv";
  write_text(path, out.str());
  std::cout << out.str();
  m.output(path);
  m.write(opt.out);
}

void transfer_command(const Options& opt) {
  Manifest m(opt, opt.command);
  const auto in = pick_checkpoint(opt, "stage1");
  const auto ckpt = load_checkpoint(in);
  m.checkpoint("input", in);
  const auto style = style_from(opt, ckpt);
  std::ostringstream out;
  for (const auto& s : read_encoded(opt.input, ckpt.vocab))
    out << text::join(ckpt.vocab.decode(transfer(ckpt.model, s, style))) << '\n';
  const auto path = opt.out / "transfer.txt";
  write_text(path, out.str());
  std::cout << out.str();
  m.output(path);
  m.write(opt.out);
}

void write_report(const fs::path& dir, const EvalReport& r, Manifest& m) {
  std::ostringstream macro, details;
  write_report_tsv(macro, r.rows);
  write_report_tsv(details, r.details);
  write_text(dir / "report.tsv", macro.str());
  write_text(dir / "details.tsv", details.str());
  write_text(dir / "summary.txt", report_summary(r).to_string());
  for (const char* f : {"report.tsv", "details.tsv", "summary.txt"}) m.output(dir / f);
}

void eval_command(const Options& opt) {
  const auto cfg = load_config(opt);
  Manifest m(opt, opt.task == "transfer" ? "eval-transfer" : "eval");
  m.config(cfg);
  const auto data = DataSet::load(data_dir(opt));
  const auto in = pick_checkpoint(opt, opt.task == "transfer" ? "stage1" : "stage2");
  const auto ckpt = load_checkpoint(in);
  m.checkpoint("input", in);
  const auto dir = opt.out / "eval";
  if (opt.task == "transfer") {
    const auto r = run_transfer_eval(ckpt.model, cfg, data);
    KeyValueFile kv;
    kv.set_number("lambda", cfg.eval.transfer_lambda);
    kv.set_number("style_accuracy", r.style_accuracy);
    kv.set_number("content_retention", r.content_retention);
    kv.set_number("count", r.count);
    write_text(dir / "transfer_summary.txt", kv.to_string());
    std::ostringstream out;
    for (const auto& s : r.outputs) out << text::join(s) << '\n';
    write_text(dir / "transfer_outputs.txt", out.str());
    m.output(dir / "transfer_summary.txt");
    m.output(dir / "transfer_outputs.txt");
    std::cout << kv.to_string();
  } else {
    const auto& items = opt.split == "val" ? data.vision_val : data.vision_test;
    const auto lambdas = lambdas_for(opt, cfg);
    const auto r = run_caption_eval(ckpt.model, cfg, data, items, lambdas, opt.split);
    write_report(dir, r, m);
    write_report_tsv(std::cout, r.rows);
  }
  m.write(opt.out);
}

void ablate_command(const Options& opt) {
  auto cfg = load_config(opt);
  const auto& row = opt.ablate;
  if (row == "dr" || row == "nbt" || row == "style") {
    for (const char* stage : {"stage1.", "stage2."}) cfg.kv.set(std::string(stage) + "use_" + row, "false");
  } else if (row == "v2l") {
    cfg.kv.set("stage2.use_v2l", "false");
  } else if (row == "multitask") {
    cfg.kv.set("stage2.multitask", "false");
  } else {
    throw std::invalid_argument("unknown ablation: " + row);
  }
  cfg = RunConfig::from_keyvalue(cfg.kv, cfg.base_dir);
  Manifest m(opt, "ablate-" + row);
  m.config(cfg);
  const auto data = DataSet::load(data_dir(opt));
  const auto dir = opt.out / "ablate" / row;

  const bool retrain_text = row == "dr" || row == "nbt" || row == "style";
  const auto in = ckpt_dir(opt, retrain_text ? "discriminator" : "stage1");
  auto ckpt = load_checkpoint(in);
  m.checkpoint("input", in);
  if (retrain_text) {
    auto log = open_out(dir / "stage1.tsv");
    run_stage1(ckpt, cfg, data, &log);
  }
  {
    auto log = open_out(dir / "stage2.tsv");
    run_stage2(ckpt, cfg, data, &log);
  }
  save_checkpoint(dir / "checkpoint", ckpt);
  m.checkpoint("output", dir / "checkpoint");
  const auto lambdas = lambdas_for(opt, cfg);
  const auto r = run_caption_eval(ckpt.model, cfg, data, data.vision_test, lambdas, "test");
  write_report(dir, r, m);
  write_report_tsv(std::cout, r.rows);
  m.write(opt.out);
}

void grad_check_command(const Options& opt) {
  Manifest m(opt, opt.command);
  const auto arch = grad_check_architecture();
  const std::uint64_t seed = opt.seed.value_or(0);
  std::ostringstream out;
  out << "loss\tprecision\tmax_rel_error\ttolerance\tchecked\tparam_count\tpass\n";
  bool ok = true;
  for (auto which : all_losses()) {
    for (auto p : {Precision::kF32, Precision::kF64}) {
      const auto r = grad_check(which, arch, p, 1e-6, seed);
      const double tol = p == Precision::kF32 ? 1e-3 : 1e-5;
      const bool pass = r.max_rel_error <= tol && r.checked > 0;
      ok = ok && pass;
      out << loss_name(which) << '\t' << (p == Precision::kF32 ? "f32" : "f64") << '\t'
          << KeyValueFile::format_number(r.max_rel_error) << '\t' << KeyValueFile::format_number(tol) << '\t'
          << r.checked << '\t' << r.param_count << '\t' << (pass ? "pass" : "FAIL") << '\n';
    }
  }
  const auto path = opt.out / "grad_check.tsv";
  write_text(path, out.str());
  std::cout << out.str();
  m.output(path);
  m.write(opt.out);
  if (!ok) throw std::runtime_error("gradient check exceeded tolerance, see " + path.string());
}

void embed_viz_command(const Options& opt) {
  const auto cfg = load_config(opt);
  Manifest m(opt, opt.command);
  m.config(cfg);
  const auto data = DataSet::load(data_dir(opt));
  const auto in = pick_checkpoint(opt, "stage1");
  const auto ckpt = load_checkpoint(in);
  m.checkpoint("input", in);
  const auto r = run_probe(ckpt.model, cfg, data);
  std::ostringstream coords;
  coords << "x\ty\tlabel\n";
  for (std::size_t i = 0; i < r.coords.size(); ++i)
    coords << KeyValueFile::format_number(r.coords[i].first) << '\t' << KeyValueFile::format_number(r.coords[i].second)
           << '\t' << data.spec.style_name(r.labels[i]) << '\n';
  KeyValueFile kv;
  kv.set_number("probe_accuracy", r.accuracy);
  kv.set_number("shuffled_accuracy", r.shuffled_accuracy);
  kv.set_number("count", r.labels.size());
  const auto dir = opt.out / "eval";
  write_text(dir / "embed.tsv", coords.str());
  write_text(dir / "embed_summary.txt", kv.to_string());
  m.output(dir / "embed.tsv");
  m.output(dir / "embed_summary.txt");
  std::cout << kv.to_string();
  m.write(opt.out);
}

}  // namespace

void run(const Options& opt) {
  const auto& c = opt.command;
  if (c == "gen-data") {
    const auto cfg = load_config(opt);
    Manifest m(opt, c);
    m.config(cfg);
    const auto dir = data_dir(opt);
    generate_data(cfg, dir);
    m.output(dir);
    m.write(opt.out);
    std::cout << dir.string() << '\n';
  } else if (c == "train-discriminator") {
    train_command(opt, "discriminator");
  } else if (c == "train-stage1") {
    train_command(opt, "stage1");
  } else if (c == "train-stage2") {
    train_command(opt, "stage2");
  } else if (c == "caption") {
    caption_command(opt);
  } else if (c == "transfer") {
    transfer_command(opt);
  } else if (c == "eval") {
    eval_command(opt);
  } else if (c == "ablate") {
    ablate_command(opt);
  } else if (c == "grad-check") {
    grad_check_command(opt);
  } else if (c == "embed-viz") {
    embed_viz_command(opt);
  } else {
    throw std::invalid_argument("unknown command: " + c);
  }
}

}  // namespace fscap::cli
