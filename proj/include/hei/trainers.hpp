#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hei/autodiff.hpp"
#include "hei/backbones.hpp"
#include "hei/graph.hpp"
#include "hei/nn.hpp"
#include "hei/optim.hpp"
#include "hei/random.hpp"
#include "hei/similarity.hpp"
#include "hei/tensor.hpp"

namespace hei {

enum class TrainerKind { Erm, Vrex, EermLite, Hei };

inline const char* to_string(TrainerKind t) {
  switch (t) {
    case TrainerKind::Erm: return "erm";
    case TrainerKind::Vrex: return "vrex";
    case TrainerKind::EermLite: return "eerm_lite";
    case TrainerKind::Hei: return "hei";
  }
  return "?";
}

inline TrainerKind parse_trainer(const std::string& s) {
  if (s == "erm") return TrainerKind::Erm;
  if (s == "vrex") return TrainerKind::Vrex;
  if (s == "eerm_lite") return TrainerKind::EermLite;
  if (s == "hei") return TrainerKind::Hei;
  throw std::invalid_argument("unknown trainer: " + s);
}

struct TrainConfig {
  TrainerKind trainer = TrainerKind::Erm;
  std::size_t epochs = 200;
  std::size_t warmup_epochs = 50;  // plain ERM phase before environment inference
  std::size_t K = 6;
  double lambda = 1.0;
  double lr = 1e-2;
  double lr_rho = 1e-3;  // environment-classifier rate, kept below lr
  double weight_decay = 0.0;
  double drop_rate_max = 0.3;  // edge-drop ladder ceiling for augmented envs
  std::uint64_t seed = 0;
  std::vector<Metric> z_metrics = {Metric::SimRank};
  std::size_t rho_hidden = 32;
  std::size_t m_inner = 1;  // per-environment classifier steps per epoch
  bool stop_grad_env_heads = false;

  void validate() const {
    detail::require(epochs >= 1, "train: epochs must be >= 1");
    detail::require(lambda >= 0.0, "train: lambda must be >= 0");
    detail::require(lr > 0.0, "train: lr must be > 0");
    if (trainer != TrainerKind::Erm)
      detail::require(K >= 2 && K <= 12, "train: K must be in [2,12]");
    if (trainer == TrainerKind::Hei) {
      detail::require(warmup_epochs < epochs, "train: warmup_epochs must be < epochs");
      detail::require(lr_rho <= lr, "train: lr_rho must be <= lr");
      detail::require(!z_metrics.empty(), "train: z_metrics must be non-empty");
      detail::require(m_inner >= 1, "train: m_inner must be >= 1");
    }
    if (trainer == TrainerKind::EermLite)
      detail::require(drop_rate_max >= 0.0 && drop_rate_max <= 1.0,
                      "train: drop_rate_max must be in [0,1]");
  }
};

/// Soft environment weights for the train nodes: row-stochastic, plus the
/// argmax ids used only for reporting.
struct EnvAssignment {
  Tensor weights;                  // n_train x K
  std::vector<std::int32_t> hard;  // n_train
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_acc = 0;
  double penalty = 0;
  std::vector<std::size_t> env_sizes;
  std::vector<double> risks;
};

struct ModelState {
  EncoderSpec spec;
  Encoder encoder;
  ClassifierHead head;
  std::vector<ClassifierHead> env_heads;  // HEI only
  nn::Mlp rho;                            // HEI only
  bool has_env_model = false;
};

struct TrainResult {
  ModelState model;
  std::vector<EpochRecord> history;
  double best_val_acc = 0;
  std::size_t best_epoch = 0;
};

inline std::vector<std::int32_t> gather_labels(const Graph& g, const IndexSet& idx) {
  std::vector<std::int32_t> y;
  y.reserve(idx.size());
  for (NodeId v : idx) {
    detail::require(v >= 0 && static_cast<std::size_t>(v) < g.num_nodes,
                    "gather_labels: node id out of range");
    if (!g.labeled(v)) throw std::invalid_argument("gather_labels: unlabeled node");
    y.push_back(g.labels[static_cast<std::size_t>(v)]);
  }
  return y;
}

inline ad::Var<double> unit_weights(std::size_t n) {
  return ad::constant(Tensor::full(n, 1, 1.0));
}

/// Mean cross-entropy over idx: R(omega, Phi).
inline ad::Var<double> erm_risk(const Encoder& enc, const ClassifierHead& head,
                                const Encoder::Prepared& prep, const IndexSet& idx,
                                const std::vector<std::int32_t>& labels) {
  detail::require(!idx.empty(), "erm_risk: empty index set");
  auto logits = classify(head, enc.encode(prep, idx));
  return ad::weighted_ce(logits, std::span<const std::int32_t>(labels), unit_weights(idx.size()),
                         static_cast<double>(idx.size()));
}

/// Environment-k soft risk with the 1/N_train prefactor; the K risks sum to
/// the plain ERM risk for any row-stochastic weights.
inline ad::Var<double> soft_env_risk(ad::Var<double> logits,
                                     std::span<const std::int32_t> labels,
                                     ad::Var<double> weight_col, std::size_t n_train) {
  return ad::weighted_ce(std::move(logits), labels, std::move(weight_col),
                         static_cast<double>(n_train));
}

/// Sum over environments of the loss gap between the shared classifier and
/// the environment-dedicated one.
inline ad::Var<double> invariance_penalty(const ad::Var<double>& main_logits,
                                          const std::vector<ad::Var<double>>& env_logits,
                                          std::span<const std::int32_t> labels,
                                          const std::vector<ad::Var<double>>& weight_cols,
                                          std::size_t n_train) {
  detail::require(env_logits.size() == weight_cols.size(),
                  "invariance_penalty: env/weight count mismatch");
  detail::require(!env_logits.empty(), "invariance_penalty: no environments");
  std::vector<ad::Var<double>> gaps;
  gaps.reserve(env_logits.size());
  for (std::size_t k = 0; k < env_logits.size(); ++k)
    gaps.push_back(ad::sub(soft_env_risk(main_logits, labels, weight_cols[k], n_train),
                           soft_env_risk(env_logits[k], labels, weight_cols[k], n_train)));
  return ad::sum_scalars(gaps);
}

inline EnvAssignment env_weights(const nn::Mlp& rho, const Tensor& z_rows) {
  detail::require(z_rows.all_finite(), "env_weights: non-finite pattern input");
  auto out = ad::softmax_rows(rho.forward(ad::constant(z_rows)));
  EnvAssignment a;
  a.weights = out->value;
  a.hard.resize(a.weights.rows);
  for (std::size_t i = 0; i < a.weights.rows; ++i) {
    auto row = a.weights.row(i);
    a.hard[i] = static_cast<std::int32_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
  }
  return a;
}

/// K graphs on shared features/labels; graph k drops each undirected edge
/// independently with rate (k/K) * drop_rate_max, so k=0 is the original.
inline std::vector<Graph> make_augmented_envs(const Graph& g, std::size_t K,
                                              double drop_rate_max, std::uint64_t seed) {
  detail::require(K >= 2, "make_augmented_envs: K must be >= 2");
  detail::require(drop_rate_max >= 0.0 && drop_rate_max <= 1.0,
                  "make_augmented_envs: drop_rate_max must be in [0,1]");
  auto all_edges = g.undirected_edges();
  std::vector<Graph> envs;
  envs.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double rate = (static_cast<double>(k) / static_cast<double>(K)) * drop_rate_max;
    if (rate == 0.0) {
      envs.push_back(g);
      continue;
    }
    Rng rng = Rng(seed).derive(k);
    std::vector<std::pair<NodeId, NodeId>> kept;
    kept.reserve(all_edges.size());
    for (const auto& e : all_edges)
      if (!rng.bernoulli(rate)) kept.push_back(e);
    envs.push_back(build_graph(std::move(kept), g.features, g.labels, g.num_classes));
  }
  return envs;
}

inline double evaluate_accuracy(const Encoder& enc, const ClassifierHead& head,
                                const Encoder::Prepared& prep, const IndexSet& idx,
                                const std::vector<std::int32_t>& labels_all) {
  detail::require(!idx.empty(), "evaluate_accuracy: empty index set");
  auto logits = classify(head, enc.encode(prep, idx));
  const Tensor& lv = logits->value;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto row = lv.row(i);
    auto pred = std::max_element(row.begin(), row.end()) - row.begin();
    if (static_cast<std::int32_t>(pred) == labels_all[static_cast<std::size_t>(idx[i])])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

/// The complete minimax objective value R + lambda * penalty as one
/// differentiable graph over every parameter group (encoder, head, env heads,
/// rho). Used for gradient verification; the training loop itself freezes
/// groups per phase.
inline ad::Var<double> hei_objective(const Encoder& enc, const ClassifierHead& head,
                                     const std::vector<ClassifierHead>& env_heads,
                                     const nn::Mlp& rho, const Encoder::Prepared& prep,
                                     const IndexSet& train_idx,
                                     const std::vector<std::int32_t>& labels,
                                     const Tensor& z_train, double lambda) {
  const std::size_t n = train_idx.size();
  auto reps = enc.encode(prep, train_idx);
  auto logits = classify(head, reps);
  auto risk = ad::weighted_ce(logits, std::span<const std::int32_t>(labels), unit_weights(n),
                              static_cast<double>(n));
  auto w = ad::softmax_rows(rho.forward(ad::constant(z_train)));
  std::vector<ad::Var<double>> env_logits, cols;
  for (std::size_t k = 0; k < env_heads.size(); ++k) {
    env_logits.push_back(classify(env_heads[k], reps));
    cols.push_back(ad::slice_col(w, k));
  }
  auto penalty = invariance_penalty(logits, env_logits, labels, cols, n);
  return ad::add(risk, ad::scale(penalty, lambda));
}

namespace detail {

struct BestTracker {
  double val_acc = -1.0;
  std::size_t epoch = 0;
  std::vector<Tensor> values;

  void observe(double acc, std::size_t ep, const std::vector<ad::Parameter>& params) {
    if (acc <= val_acc) return;
    val_acc = acc;
    epoch = ep;
    values.clear();
    values.reserve(params.size());
    for (const auto& p : params) values.push_back(p.value());
  }
  void restore(std::vector<ad::Parameter>& params) const {
    require(values.size() == params.size(), "best tracker: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) params[i].node->value = values[i];
  }
};

inline std::vector<ad::Parameter> main_params(const Encoder& enc, const ClassifierHead& head) {
  auto params = enc.params();
  head.collect(params);
  return params;
}

}  // namespace detail

inline TrainResult train_erm(const TrainConfig& cfg, const EncoderSpec& spec, const Graph& g,
                             const IndexSet& train_idx, const IndexSet& val_idx) {
  cfg.validate();
  detail::require(!train_idx.empty(), "train: empty train set");
  detail::require(!val_idx.empty(), "train: empty val set");
  Rng rng(cfg.seed);
  Encoder enc(spec, g, rng);
  auto head = make_classifier(spec.hidden_dim, static_cast<std::size_t>(g.num_classes), rng);
  auto params = detail::main_params(enc, head);
  Adam opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  auto prep = enc.prepare(g);
  auto y = gather_labels(g, train_idx);

  TrainResult res;
  detail::BestTracker best;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::zero_grads(std::span<ad::Parameter>(params));
    auto loss = erm_risk(enc, head, prep, train_idx, y);
    double lv = loss->value(0, 0);
    ad::backward(loss);
    opt.step(params);
    double va = evaluate_accuracy(enc, head, prep, val_idx, g.labels);
    res.history.push_back({epoch, lv, va, 0.0, {}, {}});
    best.observe(va, epoch, params);
  }
  best.restore(params);
  res.best_val_acc = best.val_acc;
  res.best_epoch = best.epoch;
  res.model = ModelState{spec, std::move(enc), std::move(head), {}, {}, false};
  return res;
}

namespace detail {

/// Shared V-REx / EERM-lite epoch loop: per-environment risks from a caller
/// closure, objective = sum of risks + lambda * population variance.
template <typename RiskFn>
TrainResult train_rex_family(const TrainConfig& cfg, const EncoderSpec& spec, const Graph& g,
                             const IndexSet& val_idx, Encoder enc, ClassifierHead head,
                             const Encoder::Prepared& eval_prep,
                             const std::vector<std::size_t>& env_sizes, RiskFn&& risk_fn) {
  auto params = main_params(enc, head);
  Adam opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  TrainResult res;
  BestTracker best;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::zero_grads(std::span<ad::Parameter>(params));
    std::vector<ad::Var<double>> risks = risk_fn(enc, head);
    auto loss = ad::sum_scalars(risks);
    double penalty = 0.0;
    if (cfg.lambda != 0.0) {
      auto var = ad::variance_pop(risks);
      penalty = var->value(0, 0);
      loss = ad::add(loss, ad::scale(var, cfg.lambda));
    }
    double lv = loss->value(0, 0);
    ad::backward(loss);
    opt.step(params);
    double va = evaluate_accuracy(enc, head, eval_prep, val_idx, g.labels);
    std::vector<double> risk_values;
    risk_values.reserve(risks.size());
    for (const auto& r : risks) risk_values.push_back(r->value(0, 0));
    res.history.push_back({epoch, lv, va, penalty, env_sizes, std::move(risk_values)});
    best.observe(va, epoch, params);
  }
  best.restore(params);
  res.best_val_acc = best.val_acc;
  res.best_epoch = best.epoch;
  res.model = ModelState{spec, std::move(enc), std::move(head), {}, {}, false};
  return res;
}

}  // namespace detail

inline TrainResult train_vrex(const TrainConfig& cfg, const EncoderSpec& spec, const Graph& g,
                              const IndexSet& train_idx, const IndexSet& val_idx) {
  cfg.validate();
  detail::require(train_idx.size() >= cfg.K, "vrex: train partition smaller than 1 node per env");
  detail::require(!val_idx.empty(), "train: empty val set");
  Rng rng(cfg.seed);
  Encoder enc(spec, g, rng);
  auto head = make_classifier(spec.hidden_dim, static_cast<std::size_t>(g.num_classes), rng);
  auto prep = enc.prepare(g);
  auto y = gather_labels(g, train_idx);
  const std::size_t n = train_idx.size(), K = cfg.K;

  // Fixed random partition of the train nodes into K groups, drawn once.
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;
  Rng part_rng = rng.derive(2);
  part_rng.shuffle(positions);
  std::vector<Tensor> group_w(K, Tensor::zeros(n, 1));
  std::vector<std::size_t> group_sizes(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = i * K / n;  // contiguous chunks of the shuffled order
    group_w[k](positions[i], 0) = 1.0;
    ++group_sizes[k];
  }
  for (std::size_t k = 0; k < K; ++k)
    detail::require(group_sizes[k] >= 1, "vrex: empty environment group");

  std::vector<ad::Var<double>> w_consts;
  w_consts.reserve(K);
  for (std::size_t k = 0; k < K; ++k) w_consts.push_back(ad::constant(group_w[k]));

  auto risk_fn = [&](const Encoder& e, const ClassifierHead& h) {
    auto logits = classify(h, e.encode(prep, train_idx));
    std::vector<ad::Var<double>> risks;
    risks.reserve(K);
    for (std::size_t k = 0; k < K; ++k)
      risks.push_back(ad::weighted_ce(logits, std::span<const std::int32_t>(y), w_consts[k],
                                      static_cast<double>(group_sizes[k])));
    return risks;
  };
  return detail::train_rex_family(cfg, spec, g, val_idx, std::move(enc), std::move(head), prep,
                                  group_sizes, risk_fn);
}

inline TrainResult train_eerm_lite(const TrainConfig& cfg, const EncoderSpec& spec,
                                   const Graph& g, const IndexSet& train_idx,
                                   const IndexSet& val_idx) {
  cfg.validate();
  detail::require(!train_idx.empty(), "train: empty train set");
  detail::require(!val_idx.empty(), "train: empty val set");
  Rng rng(cfg.seed);
  Encoder enc(spec, g, rng);
  auto head = make_classifier(spec.hidden_dim, static_cast<std::size_t>(g.num_classes), rng);
  auto envs = make_augmented_envs(g, cfg.K, cfg.drop_rate_max, rng.derive(3).seed());
  std::vector<Encoder::Prepared> preps;
  preps.reserve(envs.size());
  for (const auto& env : envs) preps.push_back(enc.prepare(env));
  auto y = gather_labels(g, train_idx);

  std::vector<std::size_t> edge_counts;
  edge_counts.reserve(envs.size());
  for (const auto& env : envs) edge_counts.push_back(env.num_edges());

  auto risk_fn = [&](const Encoder& e, const ClassifierHead& h) {
    std::vector<ad::Var<double>> risks;
    risks.reserve(preps.size());
    for (const auto& p : preps) risks.push_back(erm_risk(e, h, p, train_idx, y));
    return risks;
  };
  // preps[0] is the unmodified graph; validation/eval run against it.
  return detail::train_rex_family(cfg, spec, g, val_idx, std::move(enc), std::move(head),
                                  preps[0], edge_counts, risk_fn);
}

/// Heterophily-guided environment inference. Warm-up trains (Phi, omega) by
/// plain ERM; afterwards each epoch (a) soft-assigns train nodes to K
/// environments from their neighbor patterns, (b) fits the per-environment
/// heads on detached representations, (c) takes an ascent step on rho to
/// maximize the invariance penalty, and (d) descends (Phi, omega) on
/// R + lambda * penalty. lambda == 0 replays the plain ERM trajectory.
inline TrainResult train_hei(const TrainConfig& cfg, const EncoderSpec& spec, const Graph& g,
                             const IndexSet& train_idx, const IndexSet& val_idx,
                             const Tensor& z) {
  cfg.validate();
  detail::require(!train_idx.empty(), "train: empty train set");
  detail::require(!val_idx.empty(), "train: empty val set");
  detail::require(z.rows == g.num_nodes, "hei: pattern matrix rows != num_nodes");
  detail::require(z.cols == cfg.z_metrics.size(), "hei: pattern matrix cols != |z_metrics|");

  Rng rng(cfg.seed);
  Encoder enc(spec, g, rng);
  auto head = make_classifier(spec.hidden_dim, static_cast<std::size_t>(g.num_classes), rng);
  // Environment machinery draws from a derived stream so the main trajectory
  // is bit-identical to ERM whenever the penalty is disabled.
  Rng aux = rng.derive(1);
  nn::Mlp rho("rho", z.cols, cfg.rho_hidden, cfg.K, 2, aux);
  std::vector<ClassifierHead> env_heads;
  env_heads.reserve(cfg.K);
  for (std::size_t k = 0; k < cfg.K; ++k)
    env_heads.emplace_back("env" + std::to_string(k), spec.hidden_dim,
                           static_cast<std::size_t>(g.num_classes), aux);

  auto params = detail::main_params(enc, head);
  std::vector<ad::Parameter> env_params;
  for (const auto& h : env_heads) h.collect(env_params);
  auto rho_params = rho.params();

  Adam opt_main({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Adam opt_env({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Adam opt_rho({cfg.lr_rho, 0.9, 0.999, 1e-8, 0.0});

  auto prep = enc.prepare(g);
  auto y = gather_labels(g, train_idx);
  const std::size_t n = train_idx.size(), K = cfg.K;
  Tensor z_train = gather_rows(z, train_idx);
  // rho sees standardized patterns (per-metric train mean/std). Raw scores
  // occupy a metric-dependent sliver of [0, 1], where a randomly initialized
  // MLP emits near-constant assignments and the ascent has nothing to grab;
  // whitening makes the initial environments genuinely pattern-dependent.
  for (std::size_t c = 0; c < z_train.cols; ++c) {
    double m = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += z_train(i, c);
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = z_train(i, c) - m;
      s2 += d * d;
    }
    double s = std::sqrt(s2 / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
    for (std::size_t i = 0; i < n; ++i) z_train(i, c) = (z_train(i, c) - m) / s;
  }
  const bool use_penalty = cfg.lambda != 0.0;

  // Env heads keep their independent random inits. Cloning them from the
  // shared head looks tidy (penalty starts at 0) but puts the minimax on a
  // symmetric saddle: identical heads see identical per-node gaps, the
  // assignment gradient cancels columnwise, and rho never differentiates
  // the environments.
  auto make_weight_cols = [&](const EnvAssignment& assign) {
    std::vector<ad::Var<double>> w_consts;
    w_consts.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
      Tensor col(n, 1);
      for (std::size_t i = 0; i < n; ++i) col(i, 0) = assign.weights(i, k);
      w_consts.push_back(ad::constant(std::move(col)));
    }
    return w_consts;
  };
  // Per-environment heads descend their own soft risks on detached
  // representations; the heads are disjoint so one summed backward suffices.
  auto fit_env_heads = [&](const std::vector<ad::Var<double>>& w_consts,
                           const Tensor& reps_value, std::size_t steps) {
    for (std::size_t step = 0; step < steps; ++step) {
      ad::zero_grads(std::span<ad::Parameter>(env_params));
      auto reps_const = ad::constant(reps_value);
      std::vector<ad::Var<double>> losses;
      losses.reserve(K);
      for (std::size_t k = 0; k < K; ++k)
        losses.push_back(soft_env_risk(classify(env_heads[k], reps_const),
                                       std::span<const std::int32_t>(y), w_consts[k], n));
      auto env_loss = ad::sum_scalars(losses);
      ad::backward(env_loss);
      opt_env.step(env_params);
    }
  };
  // The gap sum_k [R_k(omega) - R_k(omega_k)] measures invariance only near
  // the inner argmax; against badly-fit heads it is negative and the outer
  // step exploits them instead. Warm-start the heads at phase entry.
  constexpr std::size_t kEnvBootstrapSteps = 200;

  TrainResult res;
  detail::BestTracker best;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!use_penalty || epoch < cfg.warmup_epochs) {
      ad::zero_grads(std::span<ad::Parameter>(params));
      auto loss = erm_risk(enc, head, prep, train_idx, y);
      double lv = loss->value(0, 0);
      ad::backward(loss);
      opt_main.step(params);
      double va = evaluate_accuracy(enc, head, prep, val_idx, g.labels);
      res.history.push_back({epoch, lv, va, 0.0, {}, {}});
      // Warm-up checkpoints are bootstrap state, not candidate models of the
      // method; selection starts once the penalty is active.
      if (!use_penalty) best.observe(va, epoch, params);
      continue;
    }

    // (a) Soft environment assignment from the current rho, frozen for (b,d).
    EnvAssignment assign = env_weights(rho, z_train);
    std::vector<std::size_t> env_sizes(K, 0);
    for (std::int32_t h : assign.hard) ++env_sizes[static_cast<std::size_t>(h)];
    auto w_consts = make_weight_cols(assign);

    // (b) Inner maximization on the env heads.
    Tensor reps_value = enc.encode(prep, train_idx)->value;
    if (epoch == cfg.warmup_epochs) fit_env_heads(w_consts, reps_value, kEnvBootstrapSteps);
    fit_env_heads(w_consts, reps_value, cfg.m_inner);

    // (c) Ascent on rho: all logits frozen as constants, penalty depends on
    // rho only through the assignment weights.
    {
      auto reps_const = ad::constant(reps_value);
      auto main_logits_c = ad::constant(classify(head, reps_const)->value);
      std::vector<ad::Var<double>> env_logits_c, cols;
      env_logits_c.reserve(K);
      cols.reserve(K);
      auto w = ad::softmax_rows(rho.forward(ad::constant(z_train)));
      for (std::size_t k = 0; k < K; ++k) {
        env_logits_c.push_back(ad::constant(classify(env_heads[k], reps_const)->value));
        cols.push_back(ad::slice_col(w, k));
      }
      auto penalty = invariance_penalty(main_logits_c, env_logits_c,
                                        std::span<const std::int32_t>(y), cols, n);
      ad::zero_grads(std::span<ad::Parameter>(rho_params));
      ad::backward(ad::scale(penalty, -1.0));
      opt_rho.step(rho_params);
    }

    // (d) Joint descent on (Phi, omega) against R + lambda * penalty, with
    // the env-head branch reaching Phi unless stop_grad_env_heads is set.
    ad::zero_grads(std::span<ad::Parameter>(params));
    auto reps = enc.encode(prep, train_idx);
    auto logits = classify(head, reps);
    auto risk = ad::weighted_ce(logits, std::span<const std::int32_t>(y), unit_weights(n),
                                static_cast<double>(n));
    auto env_reps = cfg.stop_grad_env_heads ? ad::constant(reps->value) : reps;
    std::vector<ad::Var<double>> env_logits;
    env_logits.reserve(K);
    for (std::size_t k = 0; k < K; ++k) env_logits.push_back(classify(env_heads[k], env_reps));
    auto penalty =
        invariance_penalty(logits, env_logits, std::span<const std::int32_t>(y), w_consts, n);
    auto loss = ad::add(risk, ad::scale(penalty, cfg.lambda));
    double lv = loss->value(0, 0);
    double pv = penalty->value(0, 0);
    std::vector<double> risks;
    risks.reserve(K);
    for (std::size_t k = 0; k < K; ++k)
      risks.push_back(soft_env_risk(logits, std::span<const std::int32_t>(y), w_consts[k], n)
                          ->value(0, 0));
    ad::backward(loss);
    opt_main.step(params);

    double va = evaluate_accuracy(enc, head, prep, val_idx, g.labels);
    res.history.push_back({epoch, lv, va, pv, std::move(env_sizes), std::move(risks)});
    best.observe(va, epoch, params);
  }
  best.restore(params);
  res.best_val_acc = best.val_acc;
  res.best_epoch = best.epoch;
  res.model =
      ModelState{spec, std::move(enc), std::move(head), std::move(env_heads), std::move(rho), true};
  return res;
}

/// Dispatch on cfg.trainer. The pattern matrix (full graph, one column per
/// configured metric) is computed here when HEI needs it and none is given.
inline TrainResult train(const TrainConfig& cfg, const EncoderSpec& spec, const Graph& g,
                         const IndexSet& train_idx, const IndexSet& val_idx,
                         const Tensor* z = nullptr) {
  switch (cfg.trainer) {
    case TrainerKind::Erm: return train_erm(cfg, spec, g, train_idx, val_idx);
    case TrainerKind::Vrex: return train_vrex(cfg, spec, g, train_idx, val_idx);
    case TrainerKind::EermLite: return train_eerm_lite(cfg, spec, g, train_idx, val_idx);
    case TrainerKind::Hei: {
      if (z) return train_hei(cfg, spec, g, train_idx, val_idx, *z);
      Tensor zz = build_pattern_matrix(g, cfg.z_metrics);
      return train_hei(cfg, spec, g, train_idx, val_idx, zz);
    }
  }
  throw std::logic_error("train: unreachable");
}

}  // namespace hei
