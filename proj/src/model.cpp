#include "relex/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "relex/errors.hpp"

namespace relex::model {

std::string to_string(EncoderKind k) { return k == EncoderKind::kCnn ? "cnn" : "pcnn"; }
std::string to_string(IntraKind k) { return k == IntraKind::kBaseline ? "bl" : "ra"; }
std::string to_string(InterKind k) { return k == InterKind::kNone ? "none" : "bag_att"; }
std::string to_string(Stage s) { return s == Stage::kPretrain ? "pretrain" : "main"; }

EncoderKind encoder_kind_from(const std::string& s) {
  if (s == "cnn") return EncoderKind::kCnn;
  if (s == "pcnn") return EncoderKind::kPcnn;
  throw ConfigError("unknown encoder kind: '" + s + "' (expected cnn|pcnn)");
}

IntraKind intra_kind_from(const std::string& s) {
  if (s == "bl") return IntraKind::kBaseline;
  if (s == "ra") return IntraKind::kRelationAware;
  throw ConfigError("unknown intra-bag attention kind: '" + s + "' (expected bl|ra)");
}

InterKind inter_kind_from(const std::string& s) {
  if (s == "none") return InterKind::kNone;
  if (s == "bag_att") return InterKind::kBagAttention;
  throw ConfigError("unknown inter-bag attention kind: '" + s + "' (expected none|bag_att)");
}

Stage stage_from(const std::string& s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "main") return Stage::kMain;
  throw ConfigError("unknown stage: '" + s + "'");
}

void ModelConfig::validate() const {
  if (d_w < 1 || d_p < 1 || d_c < 1) throw ConfigError("embedding/filter dims must be >= 1");
  if (window < 1 || window % 2 == 0) throw ConfigError("window must be odd and >= 1");
  if (max_dist < 1) throw ConfigError("max_dist must be >= 1");
  if (h < 2) throw ConfigError("relation count h must be >= 2 (incl. NA)");
  if (n < 1) throw ConfigError("group size n must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate in [0, 1)");
  if (lr_pretrain <= 0.0 || lr_train <= 0.0) throw ConfigError("learning rates must be > 0");
  if (decay_every < 1 || decay_factor <= 0.0) throw ConfigError("bad decay schedule");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be > 0");
  if (batch_pretrain < 1 || batch_train < 1) throw ConfigError("batch sizes must be >= 1");
  if (eval_every < 1 || patience < 1 || max_steps_per_stage < 1) {
    throw ConfigError("bad convergence rule");
  }
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) throw ConfigError("dev_fraction in [0, 1)");
  if (min_count < 0) throw ConfigError("min_count must be >= 0");
}

ModelParams ModelParams::init(const ModelConfig& cfg, int vocab_rows, Rng& rng) {
  cfg.validate();
  auto dims = cfg.encoder_dims();
  ModelParams p;
  p.tables.word_table = Matrix::uniform(vocab_rows, cfg.d_w, -0.25, 0.25, rng);
  p.tables.pos_head = Matrix::glorot(dims.pos_rows(), cfg.d_p, rng);
  p.tables.pos_tail = Matrix::glorot(dims.pos_rows(), cfg.d_p, rng);
  p.conv.kernel = Matrix::glorot(cfg.d_c, cfg.window * dims.in_width(), rng);
  p.conv.bias = Matrix(1, cfg.d_c);
  p.relation_embedding = Matrix::glorot(cfg.h, cfg.rep_dim(), rng);
  p.relation_bias = Matrix(1, cfg.h);
  return p;
}

const std::vector<std::string>& ModelParams::names() {
  static const std::vector<std::string> kNames = {
      "word_table", "pos_head",           "pos_tail",      "conv_kernel",
      "conv_bias",  "relation_embedding", "relation_bias",
  };
  return kNames;
}

std::vector<Matrix*> ModelParams::matrices() {
  return {&tables.word_table, &tables.pos_head,    &tables.pos_tail,  &conv.kernel,
          &conv.bias,         &relation_embedding, &relation_bias};
}

std::vector<const Matrix*> ModelParams::matrices() const {
  return {&tables.word_table, &tables.pos_head,    &tables.pos_tail,  &conv.kernel,
          &conv.bias,         &relation_embedding, &relation_bias};
}

std::vector<num::NamedMatrix> ModelParams::named() const {
  std::vector<num::NamedMatrix> out;
  auto ms = matrices();
  for (std::size_t i = 0; i < ms.size(); ++i) out.push_back({names()[i], *ms[i]});
  return out;
}

void ModelParams::set_from(const std::vector<Matrix>& values) {
  auto ms = matrices();
  if (values.size() != ms.size()) throw ContractError("ModelParams::set_from size mismatch");
  for (std::size_t i = 0; i < ms.size(); ++i) *ms[i] = values[i];
}

ParamLeaves make_leaves(Tape& tape, const ModelParams& params, bool requires_grad) {
  return ParamLeaves{
      tape.leaf(params.tables.word_table, requires_grad),
      tape.leaf(params.tables.pos_head, requires_grad),
      tape.leaf(params.tables.pos_tail, requires_grad),
      tape.leaf(params.conv.kernel, requires_grad),
      tape.leaf(params.conv.bias, requires_grad),
      tape.leaf(params.relation_embedding, requires_grad),
      tape.leaf(params.relation_bias, requires_grad),
  };
}

namespace {

Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
  // Inverted dropout: kept entries are scaled by 1/keep so evaluation needs
  // no rescaling.
  double keep = 1.0 - rate;
  Matrix mask(rows, cols);
  for (auto& x : mask.data()) x = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace

GroupGraph build_group_graph(Tape& tape, const BagGroup& group, const ParamLeaves& leaves,
                             const Vocabulary& vocab, const ModelConfig& cfg, Mode mode,
                             Rng* dropout_rng) {
  if (group.bags.empty()) throw ContractError("forward_group: empty group");
  const bool use_dropout = mode == Mode::kTrain && cfg.dropout_rate > 0.0;
  if (use_dropout && dropout_rng == nullptr) {
    throw ContractError("forward_group: train mode with dropout requires an RNG");
  }
  auto dims = cfg.encoder_dims();

  GroupGraph graph;
  std::vector<Var> normalized;
  normalized.reserve(group.bags.size());
  for (const Bag& bag : group.bags) {
    if (bag.sentences.empty()) throw ContractError("forward_group: empty bag");
    std::vector<Var> sentence_reprs;
    sentence_reprs.reserve(bag.sentences.size());
    for (const auto& rec : bag.sentences) {
      Var words = encoder::word_repr(tape, rec, vocab, leaves.word_table, leaves.pos_head,
                                     leaves.pos_tail, dims);
      Var s = cfg.encoder == EncoderKind::kPcnn
                  ? encoder::pcnn_encode(tape, words, rec.head_pos, rec.tail_pos,
                                         leaves.conv_kernel, leaves.conv_bias)
                  : encoder::cnn_encode(tape, words, leaves.conv_kernel, leaves.conv_bias);
      sentence_reprs.push_back(s);
    }
    Var sentences = tape.concat_rows(sentence_reprs);  // m x rep_dim

    attn::IntraBagResult intra;
    if (cfg.intra == IntraKind::kBaseline && mode == Mode::kTrain) {
      if (group.relation_id < 0) throw ContractError("baseline attention needs a bag label");
      intra = attn::intra_bag_bl_train(tape, sentences, leaves.relation_embedding,
                                       group.relation_id);
    } else {
      intra = attn::intra_bag_ra(tape, sentences, leaves.relation_embedding);
    }
    graph.alpha.push_back(intra.alpha);

    Var bag_repr = intra.bag_repr;
    if (use_dropout && !cfg.dropout_after_norm) {
      Var mask = tape.leaf(dropout_mask(cfg.h, cfg.rep_dim(), cfg.dropout_rate, *dropout_rng));
      bag_repr = tape.hadamard(bag_repr, mask);
    }
    Var norm = tape.normalize_rows(bag_repr);
    if (use_dropout && cfg.dropout_after_norm) {
      Var mask = tape.leaf(dropout_mask(cfg.h, cfg.rep_dim(), cfg.dropout_rate, *dropout_rng));
      norm = tape.hadamard(norm, mask);
    }
    normalized.push_back(norm);
  }

  Var group_repr;
  const int n = static_cast<int>(group.bags.size());
  if (cfg.inter == InterKind::kBagAttention) {
    attn::InterBagResult inter = attn::inter_bag_normalized(tape, normalized);
    group_repr = inter.group_repr;
    graph.beta = inter.beta;
  } else {
    group_repr = attn::uniform_group_repr(tape, normalized);
    graph.beta = tape.leaf(Matrix(n, cfg.h, 1.0 / n), false);
  }
  graph.logits = attn::group_logits(tape, group_repr, leaves.relation_embedding,
                                    leaves.relation_bias);
  return graph;
}

GroupDiagnostics forward_group(const BagGroup& group, const ModelParams& params,
                               const Vocabulary& vocab, const ModelConfig& cfg, Mode mode,
                               Rng* dropout_rng) {
  Tape tape;
  ParamLeaves leaves = make_leaves(tape, params, false);
  GroupGraph graph = build_group_graph(tape, group, leaves, vocab, cfg, mode, dropout_rng);
  Var probs = tape.softmax_rows(graph.logits);
  GroupDiagnostics diag;
  diag.probs = tape.value(probs);
  for (Var a : graph.alpha) diag.alpha.push_back(tape.value(a));
  diag.beta = tape.value(graph.beta);
  return diag;
}

Var build_batch_loss(Tape& tape, std::span<const BagGroup> batch, const ParamLeaves& leaves,
                     const Vocabulary& vocab, const ModelConfig& cfg, Mode mode,
                     Rng* dropout_rng) {
  if (batch.empty()) throw ContractError("loss: empty batch");
  Var total;
  for (const BagGroup& group : batch) {
    if (group.relation_id < 0 || group.relation_id >= cfg.h) {
      throw ContractError("loss: group relation label out of range");
    }
    GroupGraph graph = build_group_graph(tape, group, leaves, vocab, cfg, mode, dropout_rng);
    Var nll = tape.cross_entropy_logits(graph.logits, group.relation_id);
    total = total.valid() ? tape.add(total, nll) : nll;
  }
  return total;
}

double batch_loss(std::span<const BagGroup> batch, const ModelParams& params,
                  const Vocabulary& vocab, const ModelConfig& cfg, Mode mode,
                  Rng* dropout_rng) {
  Tape tape;
  ParamLeaves leaves = make_leaves(tape, params, false);
  Var loss = build_batch_loss(tape, batch, leaves, vocab, cfg, mode, dropout_rng);
  return tape.value(loss)(0, 0);
}

double clip_scale(double global_norm, double clip_norm) {
  if (global_norm <= clip_norm || global_norm == 0.0) return 1.0;
  return clip_norm / global_norm;
}

double global_grad_norm(std::span<const Matrix> grads) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.l2_norm_squared();
  return std::sqrt(sq);
}

double learning_rate(const ModelConfig& cfg, Stage stage, long step) {
  double base = stage == Stage::kPretrain ? cfg.lr_pretrain : cfg.lr_train;
  long decays = step / cfg.decay_every;
  return base * std::pow(cfg.decay_factor, static_cast<double>(decays));
}

void sgd_step(TrainState& state, std::span<const BagGroup> batch, const Vocabulary& vocab) {
  ModelConfig cfg = state.config;
  if (state.stage == Stage::kPretrain) cfg.inter = InterKind::kNone;

  Tape tape;
  ParamLeaves leaves = make_leaves(tape, state.params, true);
  Var loss = build_batch_loss(tape, batch, leaves, vocab, cfg, Mode::kTrain, &state.rng);
  tape.backward(loss);

  const Var leaf_vars[] = {leaves.word_table, leaves.pos_head,           leaves.pos_tail,
                           leaves.conv_kernel, leaves.conv_bias,
                           leaves.relation_embedding,                    leaves.relation_bias};
  std::vector<Matrix> grads;
  grads.reserve(std::size(leaf_vars));
  for (Var v : leaf_vars) grads.push_back(tape.grad(v));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      throw Error("non-finite gradient for " + ModelParams::names()[i] + " at step " +
                  std::to_string(state.step));
    }
  }
  double scale = clip_scale(global_grad_norm(grads), cfg.clip_norm);
  double lr = learning_rate(cfg, state.stage, state.step);
  auto params = state.params.matrices();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& pd = params[i]->data();
    const auto& gd = grads[i].data();
    for (std::size_t j = 0; j < pd.size(); ++j) pd[j] -= lr * scale * gd[j];
  }
  ++state.step;
}

namespace {

std::string format_log(Stage stage, long step, double lr, double metric, bool has_metric,
                       bool improved) {
  char buf[160];
  if (has_metric) {
    std::snprintf(buf, sizeof(buf), "stage=%s step=%ld lr=%.17g dev_auc=%.17g%s",
                  to_string(stage).c_str(), step, lr, metric, improved ? " *" : "");
  } else {
    std::snprintf(buf, sizeof(buf), "stage=%s step=%ld lr=%.17g", to_string(stage).c_str(),
                  step, lr);
  }
  return buf;
}

// Runs one stage; on return state.params carry the stage-best parameters
// (or the final ones when no dev metric is available).
void run_stage(TrainState& state, const std::vector<BagGroup>& groups, const Vocabulary& vocab,
               int batch_size, const MetricFn& dev_metric, const Logger& log) {
  const ModelConfig& cfg = state.config;
  ModelParams best = state.params;
  double best_metric = -1.0;
  bool have_best = false;
  int evals_since_improvement = 0;
  long stage_steps = 0;

  // `tracked` selects the stage's returned parameters; the entry
  // evaluation is logged as a baseline only, so the stage returns the best
  // state produced by this stage's own updates.
  auto evaluate = [&](long at_step, bool tracked) {
    if (!dev_metric) return true;
    double metric = dev_metric(state);
    bool improved = tracked && (!have_best || metric > best_metric);
    if (improved) {
      best_metric = metric;
      best = state.params;
      have_best = true;
      evals_since_improvement = 0;
    } else if (tracked) {
      ++evals_since_improvement;
    }
    if (log) {
      log(format_log(state.stage, at_step, learning_rate(cfg, state.stage, at_step), metric,
                     true, improved));
    }
    return evals_since_improvement < cfg.patience;
  };

  bool keep_going = evaluate(state.step, false);

  std::vector<int> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::vector<BagGroup> batch;
  while (keep_going && stage_steps < cfg.max_steps_per_stage) {
    state.rng.shuffle(order);
    for (std::size_t at = 0; at < order.size() && keep_going; at += batch_size) {
      batch.clear();
      for (std::size_t j = at; j < std::min(at + batch_size, order.size()); ++j) {
        batch.push_back(groups[order[j]]);
      }
      sgd_step(state, batch, vocab);
      ++stage_steps;
      if (dev_metric && state.step % cfg.eval_every == 0) {
        keep_going = evaluate(state.step, true);
      }
      if (stage_steps >= cfg.max_steps_per_stage) break;
    }
  }
  if (dev_metric) {
    state.params = best;
    state.best_dev_metric = best_metric;
  }
}

}  // namespace

TrainState make_initial_state(const ModelConfig& cfg, int vocab_rows) {
  cfg.validate();
  TrainState state;
  state.config = cfg;
  Rng init_rng(cfg.seed);
  state.params = ModelParams::init(cfg, vocab_rows, init_rng);
  state.rng = Rng(cfg.seed ^ 0x5DEECE66DULL);
  state.stage = Stage::kPretrain;
  return state;
}

TrainState train_from_state(TrainState state, const std::vector<BagGroup>& groups,
                            const Vocabulary& vocab, const MetricFn& dev_metric,
                            const Logger& log) {
  const ModelConfig& cfg = state.config;
  cfg.validate();
  if (groups.empty()) throw ContractError("train: empty corpus");

  if (state.stage == Stage::kPretrain) {
    if (log) log("stage=pretrain begin inter=none batch=" + std::to_string(cfg.batch_pretrain));
    run_stage(state, groups, vocab, cfg.batch_pretrain, dev_metric, log);
  }
  if (cfg.inter == InterKind::kBagAttention) {
    state.stage = Stage::kMain;
    if (log) log("stage=main begin inter=bag_att batch=" + std::to_string(cfg.batch_train));
    run_stage(state, groups, vocab, cfg.batch_train, dev_metric, log);
  }
  if (log) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "done step=%ld best_dev_auc=%.17g", state.step,
                  state.best_dev_metric);
    log(buf);
  }
  return state;
}

TrainState train_model(const std::vector<BagGroup>& groups, const Vocabulary& vocab,
                       const ModelConfig& cfg, const MetricFn& dev_metric, const Logger& log,
                       const TrainState* resume_from) {
  cfg.validate();
  TrainState state;
  if (resume_from != nullptr) {
    const ModelConfig& old = resume_from->config;
    if (old.encoder != cfg.encoder || old.intra != cfg.intra || old.inter != cfg.inter ||
        old.d_w != cfg.d_w || old.d_p != cfg.d_p || old.d_c != cfg.d_c ||
        old.window != cfg.window || old.max_dist != cfg.max_dist || old.h != cfg.h) {
      throw ConfigError("resume checkpoint is incompatible with the requested model config");
    }
    state = *resume_from;
    state.config = cfg;
    if (log) {
      log("resume step=" + std::to_string(state.step) + " stage=" + to_string(state.stage));
    }
  } else {
    state = make_initial_state(cfg, vocab.size());
  }
  return train_from_state(std::move(state), groups, vocab, dev_metric, log);
}

}  // namespace relex::model
