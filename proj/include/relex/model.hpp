#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "relex/attention.hpp"
#include "relex/corpus.hpp"
#include "relex/encoder.hpp"
#include "relex/grad_check.hpp"
#include "relex/rng.hpp"
#include "relex/tape.hpp"

namespace relex::model {

using corpus::Bag;
using corpus::BagGroup;
using corpus::Vocabulary;
using num::Matrix;
using num::Tape;
using num::Var;

enum class EncoderKind { kCnn, kPcnn };
enum class IntraKind { kBaseline, kRelationAware };
enum class InterKind { kNone, kBagAttention };
enum class Mode { kTrain, kEval };
enum class Stage { kPretrain, kMain };

std::string to_string(EncoderKind k);
std::string to_string(IntraKind k);
std::string to_string(InterKind k);
std::string to_string(Stage s);
EncoderKind encoder_kind_from(const std::string& s);
IntraKind intra_kind_from(const std::string& s);
InterKind inter_kind_from(const std::string& s);
Stage stage_from(const std::string& s);

// Hyper-parameters. Defaults follow the reference setting: d_w 50, d_p 5
// (max distance +-30), 230 filters of window 3, dropout 0.5, SGD with lr
// 0.1 decayed to a tenth every 100k steps, batch sizes 50/10, group size 5,
// gradient clip 5.0.
struct ModelConfig {
  EncoderKind encoder = EncoderKind::kPcnn;
  IntraKind intra = IntraKind::kRelationAware;
  InterKind inter = InterKind::kBagAttention;
  int d_w = 50;
  int d_p = 5;
  int d_c = 230;
  int window = 3;
  int max_dist = 30;
  int h = 0;  // relation count incl. NA; filled from the schema
  int n = 5;  // bag group size
  double dropout_rate = 0.5;
  double lr_pretrain = 0.1;
  double lr_train = 0.001;
  long decay_every = 100000;
  double decay_factor = 0.1;
  double clip_norm = 5.0;
  int batch_pretrain = 50;  // N_p
  int batch_train = 10;     // N_t
  std::uint64_t seed = 17;
  // Convergence rule: evaluate the dev metric every eval_every steps, stop
  // a stage after `patience` evaluations without improvement, hard cap at
  // max_steps_per_stage.
  long eval_every = 200;
  int patience = 5;
  long max_steps_per_stage = 5000;
  double dev_fraction = 0.05;
  int min_count = 100;
  // Ablation switch: apply dropout after unit-normalization instead of
  // before it.
  bool dropout_after_norm = false;

  int rep_dim() const { return encoder == EncoderKind::kPcnn ? 3 * d_c : d_c; }
  encoder::EncoderDims encoder_dims() const { return {d_w, d_p, d_c, window, max_dist}; }
  void validate() const;
};

// The trainable set: embedding tables, convolution filter bank, relation
// embedding matrix R (shared between attention queries and scoring) and the
// scoring bias d.
struct ModelParams {
  encoder::EmbeddingTables tables;
  encoder::ConvParams conv;
  Matrix relation_embedding;  // h x rep_dim
  Matrix relation_bias;       // 1 x h

  static ModelParams init(const ModelConfig& cfg, int vocab_rows, Rng& rng);
  static const std::vector<std::string>& names();
  std::vector<Matrix*> matrices();
  std::vector<const Matrix*> matrices() const;
  std::vector<num::NamedMatrix> named() const;
  void set_from(const std::vector<Matrix>& values);
};

struct TrainState {
  ModelConfig config;
  ModelParams params;
  long step = 0;
  Stage stage = Stage::kPretrain;
  Rng rng{0};
  double best_dev_metric = -1.0;
};

struct ParamLeaves {
  Var word_table, pos_head, pos_tail, conv_kernel, conv_bias, relation_embedding, relation_bias;
};
ParamLeaves make_leaves(Tape& tape, const ModelParams& params, bool requires_grad);

struct GroupGraph {
  Var logits;              // 1 x h
  std::vector<Var> alpha;  // per bag, h x m
  Var beta;                // n x h
};

// Full pipeline for one bag group: encode sentences, intra-bag attention
// (relation-aware or label-query baseline), dropout on bag rows at
// training, unit normalization, inter-bag attention (or uniform weights),
// diagonal scoring. `dropout_rng` must be non-null in train mode when
// dropout_rate > 0.
GroupGraph build_group_graph(Tape& tape, const BagGroup& group, const ParamLeaves& leaves,
                             const Vocabulary& vocab, const ModelConfig& cfg, Mode mode,
                             Rng* dropout_rng);

struct GroupDiagnostics {
  Matrix probs;              // 1 x h, sums to 1
  std::vector<Matrix> alpha; // per bag h x m intra-bag weights
  Matrix beta;               // n x h inter-bag weights (uniform when inter=none)
};

GroupDiagnostics forward_group(const BagGroup& group, const ModelParams& params,
                               const Vocabulary& vocab, const ModelConfig& cfg,
                               Mode mode = Mode::kEval, Rng* dropout_rng = nullptr);

// J = -sum_groups log p(label | group), in log-sum-exp form.
Var build_batch_loss(Tape& tape, std::span<const BagGroup> batch, const ParamLeaves& leaves,
                     const Vocabulary& vocab, const ModelConfig& cfg, Mode mode,
                     Rng* dropout_rng);
double batch_loss(std::span<const BagGroup> batch, const ModelParams& params,
                  const Vocabulary& vocab, const ModelConfig& cfg, Mode mode = Mode::kEval,
                  Rng* dropout_rng = nullptr);

// min(1, clip/norm); the factor applied to all gradients when the global L2
// norm exceeds the clip threshold.
double clip_scale(double global_norm, double clip_norm);
double global_grad_norm(std::span<const Matrix> grads);
// Stage base rate decayed by decay_factor every decay_every steps.
double learning_rate(const ModelConfig& cfg, Stage stage, long step);

// One SGD update on a batch of groups. Stage kPretrain runs with inter-bag
// attention disabled regardless of cfg.inter. Non-finite gradients abort
// with a diagnostic.
void sgd_step(TrainState& state, std::span<const BagGroup> batch, const Vocabulary& vocab);

// Dev-set metric (higher is better); null disables early stopping.
using MetricFn = std::function<double(const TrainState&)>;
using Logger = std::function<void(const std::string&)>;

// Fresh state at step 0 with seeded parameter init and RNG stream.
TrainState make_initial_state(const ModelConfig& cfg, int vocab_rows);

// Runs the stage schedule from wherever `state` stands: a pretrain-stage
// state first trains with intra-bag attention only (uniform inter-bag
// weights) at lr_pretrain / batch_pretrain; when cfg.inter is bag_att,
// stage 2 continues from the best stage-1 parameters with inter-bag
// attention enabled at lr_train / batch_train. Each stage stops on
// dev-metric patience or max_steps_per_stage. Returns the state with the
// best dev metric of the final stage.
TrainState train_from_state(TrainState state, const std::vector<BagGroup>& groups,
                            const Vocabulary& vocab, const MetricFn& dev_metric,
                            const Logger& log);

// Convenience wrapper building the initial state from cfg; `resume_from`
// continues at the recorded step/stage with the saved parameters and RNG
// stream (its shape-determining config fields must match cfg; convergence
// and rate knobs come from cfg).
TrainState train_model(const std::vector<BagGroup>& groups, const Vocabulary& vocab,
                       const ModelConfig& cfg, const MetricFn& dev_metric, const Logger& log,
                       const TrainState* resume_from = nullptr);

}  // namespace relex::model
