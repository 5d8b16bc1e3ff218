// Command-line driver: dataset generation, neighbor patterns, split
// construction, single training runs, multi-trial experiments, sweeps, and
// report assembly. All outputs are deterministic for a fixed config.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hei/hei.hpp"

namespace fs = std::filesystem;
using hei::json;

namespace {

struct Flags {
  hei::ExperimentConfig cfg;
  std::string trainer = "erm";
  std::string setting = "standard";
  std::string backbone = "linkx_lite";
  std::string metrics = "simrank";
  std::string isolated = "zero";
  std::string config_path;
};

std::vector<hei::Metric> parse_metric_list(const std::string& csv) {
  std::vector<hei::Metric> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    auto comma = csv.find(',', pos);
    std::string tok = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) out.push_back(hei::parse_metric(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("empty metric list");
  return out;
}

void add_synth_flags(CLI::App* sub, hei::SynthConfig& sc) {
  sub->add_option("--nodes", sc.num_nodes, "node count");
  sub->add_option("--classes", sc.num_classes, "class count");
  sub->add_option("--mean-degree", sc.mean_degree, "target mean degree");
  sub->add_option("--d-inv", sc.d_inv, "invariant feature dims");
  sub->add_option("--d-sp", sc.d_sp, "spurious feature dims");
  sub->add_option("--train-hom-alpha", sc.train_hom_beta.alpha, "train-region Beta alpha");
  sub->add_option("--train-hom-beta", sc.train_hom_beta.beta, "train-region Beta beta");
  sub->add_option("--test-hom-alpha", sc.test_hom_beta.alpha, "test-region Beta alpha");
  sub->add_option("--test-hom-beta", sc.test_hom_beta.beta, "test-region Beta beta");
  sub->add_option("--sp-corr-train", sc.spurious_corr_train,
                  "train-region spurious/label correlation");
  sub->add_option("--sp-corr-test", sc.spurious_corr_test,
                  "test-region spurious/label correlation");
  sub->add_option("--noise-sigma", sc.noise_sigma, "feature noise std");
  sub->add_option("--train-frac", sc.train_frac, "train fraction");
  sub->add_option("--val-frac", sc.val_frac, "val fraction");
  sub->add_option("--data-seed", sc.seed, "generator seed");
  sub->add_flag("--structural-spurious", sc.structural_spurious,
                "plant the spurious signal in hub edges as well");
}

void add_graph_file_flags(CLI::App* sub, hei::ExperimentConfig& cfg) {
  sub->add_option("--edges", cfg.edges_path, "edge list file (src<TAB>dst)");
  sub->add_option("--features", cfg.features_path, "feature CSV");
  sub->add_option("--labels", cfg.labels_path, "label file (one class id per line, -1 unlabeled)");
  sub->add_option("--split", cfg.split_path, "split JSON {train,val,test}");
}

void add_experiment_flags(CLI::App* sub, Flags& f) {
  add_graph_file_flags(sub, f.cfg);
  add_synth_flags(sub, f.cfg.synth);
  sub->add_option("--setting", f.setting,
                  "standard | simulation_low_to_high | simulation_high_to_low");
  sub->add_option("--backbone", f.backbone, "linkx_lite | sgc_lite");
  sub->add_option("--hidden", f.cfg.backbone.hidden_dim, "encoder hidden width");
  sub->add_option("--layers", f.cfg.backbone.num_layers, "encoder MLP depth");
  sub->add_option("--sgc-hops", f.cfg.backbone.sgc_hops, "aggregation hops (sgc_lite)");
  sub->add_option("--trainer", f.trainer, "erm | vrex | eerm_lite | hei");
  sub->add_option("--epochs", f.cfg.train.epochs, "training epochs");
  sub->add_option("--warmup", f.cfg.train.warmup_epochs, "warm-up epochs before env inference");
  sub->add_option("--K", f.cfg.train.K, "environment count, 2..12");
  sub->add_option("--lambda", f.cfg.train.lambda, "invariance penalty weight");
  sub->add_option("--lr", f.cfg.train.lr, "learning rate");
  sub->add_option("--lr-rho", f.cfg.train.lr_rho, "environment-classifier learning rate");
  sub->add_option("--weight-decay", f.cfg.train.weight_decay, "decoupled weight decay");
  sub->add_option("--drop-rate-max", f.cfg.train.drop_rate_max, "edge-drop ceiling (eerm_lite)");
  sub->add_option("--seed", f.cfg.train.seed, "training seed (trial t uses seed+t)");
  sub->add_option("--metrics", f.metrics, "comma list: local_sim,agg_sim,simrank");
  sub->add_option("--rho-hidden", f.cfg.train.rho_hidden, "environment classifier hidden width");
  sub->add_option("--m-inner", f.cfg.train.m_inner, "per-env head steps per epoch");
  sub->add_flag("--stop-grad-env-heads", f.cfg.train.stop_grad_env_heads,
                "detach the env-head penalty branch from the encoder");
  sub->add_option("--trials", f.cfg.trials, "trial count");
  sub->add_option("--out", f.cfg.output_dir, "output directory");
  sub->add_option("--config", f.config_path, "JSON config file; overrides the flags");
}

hei::ExperimentConfig resolve(Flags& f) {
  f.cfg.train.trainer = hei::parse_trainer(f.trainer);
  f.cfg.setting = hei::parse_setting(f.setting);
  f.cfg.backbone.kind = hei::parse_encoder_kind(f.backbone);
  f.cfg.train.z_metrics = parse_metric_list(f.metrics);
  f.cfg.use_synth = f.cfg.edges_path.empty();
  if (!f.config_path.empty())
    hei::from_json_into(json::parse(hei::io::read_text(f.config_path)), f.cfg);
  return f.cfg;
}

hei::Graph load_graph_from(const hei::ExperimentConfig& cfg) {
  return hei::io::load_graph(cfg.edges_path, cfg.features_path, cfg.labels_path);
}

int cmd_synth(const hei::SynthConfig& sc_in, const std::string& config_path,
              const std::string& out_dir) {
  hei::SynthConfig sc = sc_in;
  if (!config_path.empty()) {
    json j = json::parse(hei::io::read_text(config_path));
    hei::from_json_into(j.contains("synth") ? j["synth"] : j, sc);
  }
  if (out_dir.empty()) throw std::invalid_argument("synth: --out directory required");
  auto out = hei::generate(sc);
  fs::path dir(out_dir);
  hei::io::save_graph(out.graph, dir / "edges.tsv", dir / "features.csv", dir / "labels.txt");
  hei::io::save_split(out.split, dir / "split.json");
  hei::io::save_truth(out.truth, dir / "truth.json");
  auto rep = hei::shift_report(out.graph, out.split, out.truth);
  json jrep{{"train_hist", rep.train_hist},
            {"test_hist", rep.test_hist},
            {"train_mean_hom", rep.train_mean_hom},
            {"test_mean_hom", rep.test_mean_hom},
            {"hist_l1", rep.hist_l1},
            {"spurious_match_train", rep.spurious_match_train},
            {"spurious_match_test", rep.spurious_match_test},
            {"pearson_target_realized", rep.pearson_target_realized}};
  hei::io::atomic_write_text(dir / "shift_report.json", jrep.dump(2) + "\n");
  json summary{{"version", hei::kVersion},
               {"nodes", out.graph.num_nodes},
               {"edges", out.graph.num_edges()},
               {"train", out.split.train.size()},
               {"val", out.split.val.size()},
               {"test", out.split.test.size()},
               {"train_mean_hom", rep.train_mean_hom},
               {"test_mean_hom", rep.test_mean_hom}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_patterns(const hei::ExperimentConfig& cfg, const std::string& metric, double decay_c,
                 const std::string& isolated, const std::string& out_file) {
  hei::Graph g = load_graph_from(cfg);
  hei::SimilarityConfig sim;
  sim.metric = hei::parse_metric(metric);
  sim.decay_c = decay_c;
  if (isolated == "zero") sim.isolated = hei::IsolatedNodePolicy::ZeroPattern;
  else if (isolated == "global_mean") sim.isolated = hei::IsolatedNodePolicy::GlobalMeanPattern;
  else throw std::invalid_argument("patterns: --isolated must be zero|global_mean");
  hei::NeighborPattern p = (sim.metric == hei::Metric::SimRank)
                               ? hei::estimate_patterns_fast_simrank(g, g.features, sim)
                               : hei::estimate_patterns(g, sim);
  if (out_file.empty()) throw std::invalid_argument("patterns: --out file required");
  hei::io::save_patterns_csv(p, out_file);
  hei::IndexSet all(g.num_nodes);
  for (std::size_t v = 0; v < g.num_nodes; ++v) all[v] = static_cast<hei::NodeId>(v);
  auto s = hei::pattern_summary(p, all);
  json summary{{"version", hei::kVersion}, {"nodes", g.num_nodes},   {"metric", metric},
               {"mean", s.mean},           {"std", s.std_dev},       {"q25", s.q25},
               {"median", s.median},       {"q75", s.q75}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_split(const hei::ExperimentConfig& cfg, const std::string& setting,
              const std::string& out_file) {
  hei::Graph g = load_graph_from(cfg);
  hei::NodeSplit split = hei::io::load_split(cfg.split_path);
  hei::validate_split(g, split);
  hei::EvalSetting s;
  auto kind = hei::parse_setting(setting);
  if (kind == hei::SettingKind::Standard) {
    s = hei::build_standard_setting(g, split);
  } else {
    auto [lo_hi, hi_lo] = hei::build_simulation_settings(g, split);
    s = (kind == hei::SettingKind::SimulationLowToHigh) ? lo_hi : hi_lo;
  }
  json j = hei::io::setting_to_json(s);
  if (out_file.empty()) std::cout << j.dump(2) << "\n";
  else hei::io::atomic_write_text(out_file, j.dump(2) + "\n");
  return 0;
}

int cmd_train(const hei::ExperimentConfig& cfg) {
  hei::ExperimentConfig one = cfg;
  one.trials = 1;
  std::string out_dir = one.output_dir;
  one.output_dir.clear();
  hei::ExperimentResult res = hei::run_experiment(one);
  const hei::TrialResult& t = res.trials.at(0);
  json j{{"version", hei::kVersion},
         {"full_acc", t.full_acc},
         {"high_hom_acc", t.high_hom_acc},
         {"low_hom_acc", t.low_hom_acc},
         {"best_val_acc", t.best_val_acc},
         {"best_epoch", t.best_epoch}};
  std::cout << j.dump(2) << "\n";
  if (!out_dir.empty()) {
    fs::path dir(out_dir);
    hei::io::atomic_write_text(dir / "result.json", hei::result_to_json(res).dump(2) + "\n");
    hei::io::atomic_write_text(dir / "log.jsonl", hei::history_to_jsonl(t.history));
  }
  return 0;
}

int cmd_experiment(const hei::ExperimentConfig& cfg) {
  hei::ExperimentResult res = hei::run_experiment(cfg);
  json agg{{"version", hei::kVersion},
           {"trials", res.trials.size()},
           {"full", hei::to_json(res.full)},
           {"high_hom", hei::to_json(res.high_hom)},
           {"low_hom", hei::to_json(res.low_hom)}};
  std::cout << (cfg.output_dir.empty() ? hei::result_to_json(res).dump(2) : agg.dump(2)) << "\n";
  return 0;
}

int cmd_sweep(const hei::ExperimentConfig& cfg, const std::string& param,
              const std::vector<std::string>& values) {
  auto rows = hei::sweep(cfg, param, values);
  std::string csv = param + ",full_mean,full_std,high_mean,high_std,low_mean,low_std\n";
  for (const auto& r : rows)
    csv += r.value + "," + hei::io::fmt_double(r.result.full.mean) + "," +
           hei::io::fmt_double(r.result.full.std_dev) + "," +
           hei::io::fmt_double(r.result.high_hom.mean) + "," +
           hei::io::fmt_double(r.result.high_hom.std_dev) + "," +
           hei::io::fmt_double(r.result.low_hom.mean) + "," +
           hei::io::fmt_double(r.result.low_hom.std_dev) + "\n";
  std::cout << csv;
  return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::string& labels_csv,
               const std::string& out_dir) {
  std::vector<std::string> labels;
  if (!labels_csv.empty()) {
    std::size_t pos = 0;
    while (pos <= labels_csv.size()) {
      auto comma = labels_csv.find(',', pos);
      labels.push_back(
          labels_csv.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  std::vector<std::pair<std::string, hei::ExperimentResult>> rows;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto res = hei::result_from_json(json::parse(hei::io::read_text(files[i])));
    std::string label = i < labels.size() ? labels[i] : to_string(res.config.train.trainer);
    rows.emplace_back(label, std::move(res));
  }
  auto rep = hei::report(rows);
  std::cout << rep.markdown;
  if (!out_dir.empty()) {
    fs::path dir(out_dir);
    hei::io::atomic_write_text(dir / "report.md", rep.markdown);
    hei::io::atomic_write_text(dir / "report.csv", rep.csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterophily-guided environment inference for node classification"};
  app.set_version_flag("--version", std::string(hei::kVersion));
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  hei::SynthConfig synth_cfg;
  std::string synth_config_path, synth_out;
  add_synth_flags(synth, synth_cfg);
  synth->add_option("--config", synth_config_path, "JSON config; overrides the flags");
  synth->add_option("--out", synth_out, "output directory")->required();

  // patterns
  auto* patterns = app.add_subcommand("patterns", "estimate neighbor patterns, write CSV");
  Flags pat_flags;
  std::string pat_metric = "simrank", pat_isolated = "zero", pat_out;
  double pat_c = 0.6;
  add_graph_file_flags(patterns, pat_flags.cfg);
  patterns->add_option("--metric", pat_metric, "local_sim | agg_sim | simrank");
  patterns->add_option("--decay-c", pat_c, "SimRank decay factor in (0,1)");
  patterns->add_option("--isolated", pat_isolated, "zero | global_mean");
  patterns->add_option("--out", pat_out, "output CSV path")->required();

  // split
  auto* split = app.add_subcommand("split", "build an evaluation setting from a split");
  Flags split_flags;
  std::string split_setting = "standard", split_out;
  add_graph_file_flags(split, split_flags.cfg);
  split->add_option("--setting", split_setting,
                    "standard | simulation_low_to_high | simulation_high_to_low");
  split->add_option("--out", split_out, "output JSON path (stdout when omitted)");

  // train / experiment
  auto* train = app.add_subcommand("train", "single training run");
  Flags train_flags;
  add_experiment_flags(train, train_flags);

  auto* experiment = app.add_subcommand("experiment", "multi-trial experiment");
  Flags exp_flags;
  add_experiment_flags(experiment, exp_flags);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run one experiment per parameter value");
  Flags sweep_flags;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  add_experiment_flags(sweep, sweep_flags);
  sweep->add_option("--param", sweep_param, "K | lambda | metric")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required()
      ->delimiter(',');

  // report
  auto* report = app.add_subcommand("report", "combine result JSON files into tables");
  std::vector<std::string> report_files;
  std::string report_labels, report_out;
  report->add_option("results", report_files, "result.json files")->required();
  report->add_option("--labels", report_labels, "comma-separated row labels");
  report->add_option("--out", report_out, "output directory for report.md / report.csv");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(synth_cfg, synth_config_path, synth_out);
    if (patterns->parsed())
      return cmd_patterns(pat_flags.cfg, pat_metric, pat_c, pat_isolated, pat_out);
    if (split->parsed()) return cmd_split(split_flags.cfg, split_setting, split_out);
    if (train->parsed()) return cmd_train(resolve(train_flags));
    if (experiment->parsed()) return cmd_experiment(resolve(exp_flags));
    if (sweep->parsed()) return cmd_sweep(resolve(sweep_flags), sweep_param, sweep_values);
    if (report->parsed()) return cmd_report(report_files, report_labels, report_out);
    throw std::logic_error("no subcommand dispatched");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    int code = e.get_exit_code();
    return code == 0 ? 1 : code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
}
