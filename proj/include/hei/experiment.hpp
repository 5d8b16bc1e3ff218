#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hei/graph.hpp"
#include "hei/io.hpp"
#include "hei/similarity.hpp"
#include "hei/stats.hpp"
#include "hei/synthgen.hpp"
#include "hei/trainers.hpp"
#include "hei/version.hpp"

namespace hei {

using nlohmann::json;

struct ExperimentConfig {
  // Data source: generated (trial t reseeds synth.seed + t) or files
  // (identical data every trial; only the train seed varies).
  bool use_synth = true;
  SynthConfig synth;
  std::string edges_path, features_path, labels_path, split_path;

  SettingKind setting = SettingKind::Standard;
  EncoderSpec backbone;
  TrainConfig train;
  std::size_t trials = 10;
  std::string output_dir;

  void validate() const {
    detail::require(trials >= 1, "experiment: trials must be >= 1");
    if (!use_synth)
      detail::require(!edges_path.empty() && !features_path.empty() && !labels_path.empty() &&
                          !split_path.empty(),
                      "experiment: file data source needs edges/features/labels/split paths");
  }
};

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
  double full_acc = 0, high_hom_acc = 0, low_hom_acc = 0;
  double best_val_acc = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

struct Aggregate {
  double mean = 0, std_dev = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialResult> trials;
  Aggregate full, high_hom, low_hom;
};

// ---- config JSON (schema documented in the README) ---------------------------

inline json to_json(const SynthConfig& c) {
  return json{{"num_nodes", c.num_nodes},
              {"num_classes", c.num_classes},
              {"mean_degree", c.mean_degree},
              {"d_inv", c.d_inv},
              {"d_sp", c.d_sp},
              {"train_hom_beta", {c.train_hom_beta.alpha, c.train_hom_beta.beta}},
              {"test_hom_beta", {c.test_hom_beta.alpha, c.test_hom_beta.beta}},
              {"spurious_corr_train", c.spurious_corr_train},
              {"spurious_corr_test", c.spurious_corr_test},
              {"noise_sigma", c.noise_sigma},
              {"train_frac", c.train_frac},
              {"val_frac", c.val_frac},
              {"seed", c.seed},
              {"structural_spurious", c.structural_spurious}};
}

inline void from_json_into(const json& j, SynthConfig& c) {
  c.num_nodes = j.value("num_nodes", c.num_nodes);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.mean_degree = j.value("mean_degree", c.mean_degree);
  c.d_inv = j.value("d_inv", c.d_inv);
  c.d_sp = j.value("d_sp", c.d_sp);
  if (j.contains("train_hom_beta"))
    c.train_hom_beta = {j["train_hom_beta"].at(0).get<double>(),
                        j["train_hom_beta"].at(1).get<double>()};
  if (j.contains("test_hom_beta"))
    c.test_hom_beta = {j["test_hom_beta"].at(0).get<double>(),
                       j["test_hom_beta"].at(1).get<double>()};
  c.spurious_corr_train = j.value("spurious_corr_train", c.spurious_corr_train);
  c.spurious_corr_test = j.value("spurious_corr_test", c.spurious_corr_test);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.seed = j.value("seed", c.seed);
  c.structural_spurious = j.value("structural_spurious", c.structural_spurious);
}

inline json to_json(const EncoderSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"hidden_dim", s.hidden_dim},
              {"num_layers", s.num_layers},
              {"sgc_hops", s.sgc_hops}};
}

inline void from_json_into(const json& j, EncoderSpec& s) {
  if (j.contains("kind")) s.kind = parse_encoder_kind(j["kind"].get<std::string>());
  s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
  s.num_layers = j.value("num_layers", s.num_layers);
  s.sgc_hops = j.value("sgc_hops", s.sgc_hops);
}

inline json to_json(const TrainConfig& c) {
  std::vector<std::string> metrics;
  for (auto m : c.z_metrics) metrics.emplace_back(to_string(m));
  return json{{"trainer", to_string(c.trainer)},
              {"epochs", c.epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"K", c.K},
              {"lambda", c.lambda},
              {"lr", c.lr},
              {"lr_rho", c.lr_rho},
              {"weight_decay", c.weight_decay},
              {"drop_rate_max", c.drop_rate_max},
              {"seed", c.seed},
              {"z_metrics", metrics},
              {"rho_hidden", c.rho_hidden},
              {"m_inner", c.m_inner},
              {"stop_grad_env_heads", c.stop_grad_env_heads}};
}

inline void from_json_into(const json& j, TrainConfig& c) {
  if (j.contains("trainer")) c.trainer = parse_trainer(j["trainer"].get<std::string>());
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.K = j.value("K", c.K);
  c.lambda = j.value("lambda", c.lambda);
  c.lr = j.value("lr", c.lr);
  c.lr_rho = j.value("lr_rho", c.lr_rho);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.drop_rate_max = j.value("drop_rate_max", c.drop_rate_max);
  c.seed = j.value("seed", c.seed);
  if (j.contains("z_metrics")) {
    c.z_metrics.clear();
    for (const auto& m : j["z_metrics"]) c.z_metrics.push_back(parse_metric(m.get<std::string>()));
  }
  c.rho_hidden = j.value("rho_hidden", c.rho_hidden);
  c.m_inner = j.value("m_inner", c.m_inner);
  c.stop_grad_env_heads = j.value("stop_grad_env_heads", c.stop_grad_env_heads);
}

inline SettingKind parse_setting(const std::string& s) {
  if (s == "standard") return SettingKind::Standard;
  if (s == "simulation_low_to_high") return SettingKind::SimulationLowToHigh;
  if (s == "simulation_high_to_low") return SettingKind::SimulationHighToLow;
  throw std::invalid_argument("unknown setting: " + s);
}

inline json to_json(const ExperimentConfig& c) {
  json data;
  if (c.use_synth) {
    data = {{"kind", "synth"}, {"synth", to_json(c.synth)}};
  } else {
    data = {{"kind", "files"},
            {"edges", c.edges_path},
            {"features", c.features_path},
            {"labels", c.labels_path},
            {"split", c.split_path}};
  }
  return json{{"data", data},
              {"setting", to_string(c.setting)},
              {"backbone", to_json(c.backbone)},
              {"train", to_json(c.train)},
              {"trials", c.trials},
              {"output_dir", c.output_dir}};
}

inline void from_json_into(const json& j, ExperimentConfig& c) {
  if (j.contains("data")) {
    const auto& d = j["data"];
    std::string kind = d.value("kind", c.use_synth ? "synth" : "files");
    if (kind == "synth") {
      c.use_synth = true;
      if (d.contains("synth")) from_json_into(d["synth"], c.synth);
    } else if (kind == "files") {
      c.use_synth = false;
      c.edges_path = d.value("edges", c.edges_path);
      c.features_path = d.value("features", c.features_path);
      c.labels_path = d.value("labels", c.labels_path);
      c.split_path = d.value("split", c.split_path);
    } else {
      throw std::invalid_argument("unknown data kind: " + kind);
    }
  }
  if (j.contains("setting")) c.setting = parse_setting(j["setting"].get<std::string>());
  if (j.contains("backbone")) from_json_into(j["backbone"], c.backbone);
  if (j.contains("train")) from_json_into(j["train"], c.train);
  c.trials = j.value("trials", c.trials);
  c.output_dir = j.value("output_dir", c.output_dir);
}

// ---- result JSON / CSV --------------------------------------------------------

inline json to_json(const Aggregate& a) {
  return json{{"mean", a.mean}, {"std", a.std_dev}};
}

inline json result_to_json(const ExperimentResult& r) {
  json trials = json::array();
  std::vector<std::uint64_t> seeds;
  for (const auto& t : r.trials) {
    trials.push_back({{"trial", t.trial},
                      {"data_seed", t.data_seed},
                      {"train_seed", t.train_seed},
                      {"full_acc", t.full_acc},
                      {"high_hom_acc", t.high_hom_acc},
                      {"low_hom_acc", t.low_hom_acc},
                      {"best_val_acc", t.best_val_acc},
                      {"best_epoch", t.best_epoch}});
    seeds.push_back(t.train_seed);
  }
  return json{{"version", kVersion},
              {"config", to_json(r.config)},
              {"seeds", seeds},
              {"trials", trials},
              {"aggregate",
               {{"full", to_json(r.full)},
                {"high_hom", to_json(r.high_hom)},
                {"low_hom", to_json(r.low_hom)}}}};
}

inline ExperimentResult result_from_json(const json& j) {
  ExperimentResult r;
  if (j.contains("config")) from_json_into(j["config"], r.config);
  for (const auto& t : j.at("trials")) {
    TrialResult tr;
    tr.trial = t.value("trial", std::size_t{0});
    tr.data_seed = t.value("data_seed", std::uint64_t{0});
    tr.train_seed = t.value("train_seed", std::uint64_t{0});
    tr.full_acc = t.at("full_acc").get<double>();
    tr.high_hom_acc = t.at("high_hom_acc").get<double>();
    tr.low_hom_acc = t.at("low_hom_acc").get<double>();
    tr.best_val_acc = t.value("best_val_acc", 0.0);
    tr.best_epoch = t.value("best_epoch", std::size_t{0});
    r.trials.push_back(std::move(tr));
  }
  const auto& agg = j.at("aggregate");
  auto load_agg = [&agg](const char* key) {
    return Aggregate{agg.at(key).at("mean").get<double>(), agg.at(key).at("std").get<double>()};
  };
  r.full = load_agg("full");
  r.high_hom = load_agg("high_hom");
  r.low_hom = load_agg("low_hom");
  return r;
}

inline std::string result_to_csv(const ExperimentResult& r) {
  std::string out =
      "trial,data_seed,train_seed,full_acc,high_hom_acc,low_hom_acc,best_val_acc,best_epoch\n";
  for (const auto& t : r.trials) {
    out += std::to_string(t.trial) + "," + std::to_string(t.data_seed) + "," +
           std::to_string(t.train_seed) + "," + io::fmt_double(t.full_acc) + "," +
           io::fmt_double(t.high_hom_acc) + "," + io::fmt_double(t.low_hom_acc) + "," +
           io::fmt_double(t.best_val_acc) + "," + std::to_string(t.best_epoch) + "\n";
  }
  return out;
}

inline std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& e : history) {
    json j{{"epoch", e.epoch},
           {"train_loss", e.train_loss},
           {"val_acc", e.val_acc},
           {"penalty", e.penalty},
           {"env_sizes", e.env_sizes},
           {"risks", e.risks}};
    out += j.dump() + "\n";
  }
  return out;
}

// ---- experiment runner ---------------------------------------------------------

namespace detail {

struct TrialData {
  Graph graph;
  NodeSplit split;
};

inline TrialData load_trial_data(const ExperimentConfig& cfg, std::size_t trial,
                                 std::uint64_t* data_seed) {
  TrialData d;
  if (cfg.use_synth) {
    SynthConfig sc = cfg.synth;
    sc.seed = cfg.synth.seed + trial;
    *data_seed = sc.seed;
    auto out = generate(sc);
    d.graph = std::move(out.graph);
    d.split = std::move(out.split);
  } else {
    *data_seed = 0;
    d.graph = io::load_graph(cfg.edges_path, cfg.features_path, cfg.labels_path);
    d.split = io::load_split(cfg.split_path);
    validate_split(d.graph, d.split);
  }
  return d;
}

inline EvalSetting select_setting(const Graph& g, const NodeSplit& split, SettingKind kind) {
  if (kind == SettingKind::Standard) return build_standard_setting(g, split);
  auto [low_to_high, high_to_low] = build_simulation_settings(g, split);
  return kind == SettingKind::SimulationLowToHigh ? low_to_high : high_to_low;
}

}  // namespace detail

/// Runs cfg.trials paired trials (trial t: data seed synth.seed+t, train seed
/// train.seed+t) and aggregates the three test-group accuracies. When
/// output_dir is set, writes result.json, result.csv, and per-trial epoch
/// logs; outputs carry no timestamps so identical configs produce identical
/// bytes.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  cfg.backbone.validate();
  cfg.train.validate();
  ExperimentResult res;
  res.config = cfg;

  for (std::size_t t = 0; t < cfg.trials; ++t) {
    TrialResult tr;
    tr.trial = t;
    try {
      auto data = detail::load_trial_data(cfg, t, &tr.data_seed);
      EvalSetting setting = detail::select_setting(data.graph, data.split, cfg.setting);
      TrainConfig tc = cfg.train;
      tc.seed = cfg.train.seed + t;
      tr.train_seed = tc.seed;

      TrainResult fit = train(tc, cfg.backbone, data.graph, setting.train_idx, data.split.val);
      auto prep = fit.model.encoder.prepare(data.graph);
      tr.full_acc = evaluate_accuracy(fit.model.encoder, fit.model.head, prep, setting.full_test,
                                      data.graph.labels);
      tr.high_hom_acc = evaluate_accuracy(fit.model.encoder, fit.model.head, prep,
                                          setting.high_hom_test, data.graph.labels);
      tr.low_hom_acc = evaluate_accuracy(fit.model.encoder, fit.model.head, prep,
                                         setting.low_hom_test, data.graph.labels);
      tr.best_val_acc = fit.best_val_acc;
      tr.best_epoch = fit.best_epoch;
      tr.history = std::move(fit.history);
    } catch (const std::exception& e) {
      throw std::runtime_error("trial " + std::to_string(t) + ": " + e.what());
    }
    res.trials.push_back(std::move(tr));
  }

  auto aggregate = [&res](auto field) {
    std::vector<double> xs;
    xs.reserve(res.trials.size());
    for (const auto& t : res.trials) xs.push_back(t.*field);
    return Aggregate{stats::mean(xs), stats::sample_std(xs)};
  };
  res.full = aggregate(&TrialResult::full_acc);
  res.high_hom = aggregate(&TrialResult::high_hom_acc);
  res.low_hom = aggregate(&TrialResult::low_hom_acc);

  if (!cfg.output_dir.empty()) {
    std::filesystem::path dir(cfg.output_dir);
    io::atomic_write_text(dir / "result.json", result_to_json(res).dump(2) + "\n");
    io::atomic_write_text(dir / "result.csv", result_to_csv(res));
    for (const auto& t : res.trials)
      io::atomic_write_text(dir / ("trial_" + std::to_string(t.trial) + ".jsonl"),
                            history_to_jsonl(t.history));
  }
  return res;
}

// ---- sweeps ---------------------------------------------------------------------

struct SweepRow {
  std::string value;
  ExperimentResult result;
};

/// One experiment per value of "K", "lambda", or "metric"; values are passed
/// as strings exactly as they appear on the command line.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& param,
                                   const std::vector<std::string>& values) {
  detail::require(!values.empty(), "sweep: no values given");
  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    if (param == "K") {
      cfg.train.K = static_cast<std::size_t>(std::stoul(v));
    } else if (param == "lambda") {
      cfg.train.lambda = std::stod(v);
    } else if (param == "metric") {
      cfg.train.z_metrics = {parse_metric(v)};
    } else {
      throw std::invalid_argument("sweep: unknown parameter '" + param + "' (K|lambda|metric)");
    }
    if (!base.output_dir.empty())
      cfg.output_dir = (std::filesystem::path(base.output_dir) / (param + "_" + v)).string();
    rows.push_back({v, run_experiment(cfg)});
  }
  if (!base.output_dir.empty()) {
    std::string csv = param + ",full_mean,full_std,high_mean,high_std,low_mean,low_std\n";
    for (const auto& r : rows)
      csv += r.value + "," + io::fmt_double(r.result.full.mean) + "," +
             io::fmt_double(r.result.full.std_dev) + "," + io::fmt_double(r.result.high_hom.mean) +
             "," + io::fmt_double(r.result.high_hom.std_dev) + "," +
             io::fmt_double(r.result.low_hom.mean) + "," +
             io::fmt_double(r.result.low_hom.std_dev) + "\n";
    io::atomic_write_text(std::filesystem::path(base.output_dir) / "sweep.csv", csv);
  }
  return rows;
}

// ---- reports ---------------------------------------------------------------------

struct ReportOutput {
  std::string markdown;
  std::string csv;
};

namespace detail {

inline std::string pct(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", 100.0 * a.mean, 100.0 * a.std_dev);
  return buf;
}

}  // namespace detail

/// Aggregate table in the Full / High-Hom / Low-Hom column layout; with
/// exactly two rows a paired mean-delta row is appended.
inline ReportOutput report(const std::vector<std::pair<std::string, ExperimentResult>>& rows) {
  detail::require(!rows.empty(), "report: no results given");
  ReportOutput out;
  out.markdown = "| method | full test | high hom test | low hom test |\n"
                 "|---|---|---|---|\n";
  out.csv = "method,full_mean,full_std,high_mean,high_std,low_mean,low_std\n";
  for (const auto& [label, r] : rows) {
    out.markdown += "| " + label + " | " + detail::pct(r.full) + " | " + detail::pct(r.high_hom) +
                    " | " + detail::pct(r.low_hom) + " |\n";
    out.csv += label + "," + io::fmt_double(r.full.mean) + "," + io::fmt_double(r.full.std_dev) +
               "," + io::fmt_double(r.high_hom.mean) + "," + io::fmt_double(r.high_hom.std_dev) +
               "," + io::fmt_double(r.low_hom.mean) + "," + io::fmt_double(r.low_hom.std_dev) +
               "\n";
  }
  if (rows.size() == 2) {
    const auto& a = rows[0].second;
    const auto& b = rows[1].second;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "| delta (%s - %s) | %.2f | %.2f | %.2f |\n",
                  rows[0].first.c_str(), rows[1].first.c_str(),
                  100.0 * (a.full.mean - b.full.mean), 100.0 * (a.high_hom.mean - b.high_hom.mean),
                  100.0 * (a.low_hom.mean - b.low_hom.mean));
    out.markdown += buf;
  }
  return out;
}

}  // namespace hei
