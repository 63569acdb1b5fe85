// SPDX-License-Identifier: Apache-2.0
//
// Losses and the two training stages.
//
// Every stochastic choice of a step (corruption, donor, back-translated t')
// is drawn up front into a plan; the loss is then a pure function of the
// parameters and the plan. That is what makes gradient checking possible for
// the back-translation and style terms.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fscap/autodiff.hpp"
#include "fscap/keyvalue.hpp"
#include "fscap/model.hpp"
#include "fscap/optimizer.hpp"
#include "fscap/text.hpp"
#include "fscap/visual.hpp"

namespace fscap {

// ---------------------------------------------------------------------------
// Plans

struct TextPlan {
  text::TokenSeq prev;     // t_{i-1}, supplies the reconstruction style
  text::TokenSeq cur;      // t_i
  text::TokenSeq noisy;    // corrupt(t_i, p)
  text::TokenSeq donor;    // t_j from another paragraph
  text::TokenSeq t_prime;  // greedy transfer of noisy into the donor style
  int donor_row = -1;      // row of the donor among the style candidates
};

struct VisualPlan {
  VisualFeature x;
  text::TokenSeq cur;   // factual caption paired with x
  text::TokenSeq prev;  // another factual caption used as style donor
};

/// Greedy pass 1 of back-translation, without gradients:
/// decode(fuse(E_c(noisy), E_s(donor))) with at most cur.size() + extra tokens.
template <typename T>
text::TokenSeq back_translate(const StyleCapModel<T>& model, std::span<const int> noisy, std::span<const int> donor,
                              std::size_t max_len);

struct LossToggles {
  bool dr = true;
  bool nbt = true;
  bool style = true;
  bool cap = true;
  bool v2l = true;
  bool multitask = true;
};

// ---------------------------------------------------------------------------
// Losses over a batch of plans, all means over the batch.

template <typename T>
class TextLosses {
 public:
  TextLosses(const StyleCapModel<T>& model, Tape<T>& tape, std::span<const TextPlan> plans);

  /// CE(t_i | G(fuse(E_c(noisy), E_s(t_{i-1})))).
  Var dr();
  /// CE(t_i | G(fuse(E_c(t'), E_s(t_{i-1})))); an empty t' reads as BOS.
  Var nbt();
  /// -log D(t', t_j) with t' as G's softmax rows under teacher forcing on the
  /// plan's t'. `candidates` holds normalized D embeddings; items with an
  /// empty t' contribute 0.
  Var style(const Matrix<T>& candidates, double tau);

 private:
  Var content_noisy(std::size_t i);
  Var style_prev(std::size_t i);

  const StyleCapModel<T>& model_;
  Tape<T>& t_;
  std::span<const TextPlan> plans_;
  std::vector<Var> content_noisy_;
  std::vector<Var> style_prev_;
};

template <typename T>
class VisualLosses {
 public:
  VisualLosses(const StyleCapModel<T>& model, Tape<T>& tape, std::span<const VisualPlan> plans);

  /// CE(y_i | G(fuse(E_c(project(x)), E_s(y_prev)))).
  Var cap();
  /// ||meanpool E_c(project(x)) - meanpool E_c(y)||^2.
  Var v2l();

 private:
  Var visual_content(std::size_t i);

  const StyleCapModel<T>& model_;
  Tape<T>& t_;
  std::span<const VisualPlan> plans_;
  std::vector<Var> visual_content_;
};

template <typename T>
Var loss_dr(const StyleCapModel<T>& model, Tape<T>& t, std::span<const TextPlan> plans);
template <typename T>
Var loss_nbt(const StyleCapModel<T>& model, Tape<T>& t, std::span<const TextPlan> plans);
template <typename T>
Var loss_cap(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> plans);
template <typename T>
Var loss_v2l(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> plans);

/// Mean of the given 1x1 terms; a constant 0 when there are none.
template <typename T>
Var average(Tape<T>& t, std::span<const Var> terms);

struct LossBreakdown {
  double dr = 0, nbt = 0, style = 0, text = 0;
  double cap = 0, v2l = 0, visual = 0;
  double total = 0;
};

/// Average of the enabled text terms.
template <typename T>
Var loss_text(const StyleCapModel<T>& model, Tape<T>& t, std::span<const TextPlan> plans,
              const Matrix<T>& candidates, double tau, const LossToggles& on, LossBreakdown* out = nullptr);

/// Average of the enabled visual terms.
template <typename T>
Var loss_visual(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> plans, const LossToggles& on,
                LossBreakdown* out = nullptr);

/// L_Visual + L_Text, or L_Visual alone when multitask is off.
template <typename T>
Var total_loss(const StyleCapModel<T>& model, Tape<T>& t, std::span<const VisualPlan> visual,
               std::span<const TextPlan> text_plans, const Matrix<T>& candidates, double tau, const LossToggles& on,
               LossBreakdown* out = nullptr);

// ---------------------------------------------------------------------------
// Training

struct Stage1Config {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::map<std::string, double> group_lr;
  double clip_norm = 1.0;
  double noise = 0.4;
  std::size_t max_extra_tokens = 4;  // t' may exceed t_i by this many tokens
  LossToggles toggles;
  std::uint64_t seed = 0;

  void validate() const;
  /// Keys under "stage1.".
  static Stage1Config from_keyvalue(const KeyValueFile& kv);
  void write(KeyValueFile& kv) const;
};

struct Stage2Config {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr_m = 1e-3;
  double lr_other = 5e-4;
  double clip_norm = 1.0;
  double noise = 0.4;
  std::size_t max_extra_tokens = 4;
  LossToggles toggles;
  std::uint64_t seed = 0;

  void validate() const;
  /// Keys under "stage2.".
  static Stage2Config from_keyvalue(const KeyValueFile& kv);
  void write(KeyValueFile& kv) const;
};

struct LossReport {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
  std::map<std::string, double> grad_norm;  // per group, before clipping
};

/// Tab-separated log header and one row per report.
void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LossReport& r);

struct TrainingDiverged : std::runtime_error {
  LossReport report;
  TrainingDiverged(const std::string& what, LossReport r) : std::runtime_error(what), report(std::move(r)) {}
};

using Corpus = std::vector<std::vector<text::TokenSeq>>;  // paragraphs of encoded sentences
using StepCallback = std::function<void(const LossReport&)>;

/// Stage 1: minimize L_Text over the styled corpus. D and M are frozen for
/// the duration; the caller's frozen flags are restored afterwards.
std::vector<LossReport> train_stage1(StyleCapModel<float>& model, const Corpus& corpus, const Stage1Config& cfg,
                                     const StepCallback& on_step = {});

/// Stage 2: minimize L_Visual + L_Text with E_s and D frozen. Without
/// multitask only M is trained, on L_Visual.
std::vector<LossReport> train_stage2(StyleCapModel<float>& model, std::span<const VisionItem> vision,
                                     const text::Vocab& vocab, const Corpus& corpus, const Stage2Config& cfg,
                                     const StepCallback& on_step = {});

/// Batches of text plans as stage 1 draws them: B paragraphs, one adjacent
/// pair each, a donor sentence from another paragraph of the same batch, and
/// t' from the current model when `with_t_prime` is set.
std::vector<TextPlan> plan_text_batch(const StyleCapModel<float>& model, const Corpus& corpus,
                                      std::span<const std::size_t> paragraph_ids, double noise,
                                      std::size_t max_extra_tokens, bool with_t_prime, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Gradient check

enum class LossSelector { kFuse, kDr, kNbt, kStyle, kText, kCap, kV2l, kVisual, kTotal };

std::string_view loss_name(LossSelector s);
std::vector<LossSelector> all_losses();

enum class Precision { kF32, kF64 };

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;       // trainable scalars compared
  std::size_t param_count = 0;   // scalars in the whole toy model
};

/// Tiny architecture (under 2k scalars) used by the gradient suite.
Architecture grad_check_architecture();

/// Central differences in double precision over every trainable scalar,
/// compared with the analytic gradient at the requested precision. Relative
/// error is |a - n| / max(|a|, |n|, 1e-3). Groups are frozen as the
/// corresponding training stage freezes them.
GradCheckResult grad_check(LossSelector which, const Architecture& arch, Precision precision, double eps = 1e-6,
                           std::uint64_t seed = 0);

}  // namespace fscap
