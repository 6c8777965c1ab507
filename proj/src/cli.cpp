#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ktbench/ingest.hpp"
#include "ktbench/runner.hpp"
#include "ktbench/synth.hpp"

namespace ktbench {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string model;
  std::string fusion;
  std::optional<double> observed_pct;
  std::string mode;
  std::optional<std::size_t> cutoff;
  std::string input;
  std::optional<int> jobs;
  bool print_config = false;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seed, "seed override");
  cmd->add_option("--out", f.out, "output directory (simulate: output CSV)");
  cmd->add_option("--model", f.model, "model tag: dkt | dkt+ | sakt");
  cmd->add_option("--fusion", f.fusion, "ef | lf-avg | lf-mv | lf-s");
  cmd->add_option("--observed-pct", f.observed_pct, "single multi-step observed fraction");
  cmd->add_option("--mode", f.mode, "accumulative | non-accumulative");
  cmd->add_option("--cutoff", f.cutoff, "long/short sequence length cutoff");
  cmd->add_option("--input", f.input, "dataset CSV (overrides config dataset)");
  cmd->add_option("--jobs", f.jobs, "parallel folds");
  cmd->add_flag("--print-config", f.print_config, "print the effective config with all defaults and exit");
}

ExperimentConfig experiment(const Flags& f, bool seed_is_split) {
  ExperimentConfig c = f.config.empty() ? experiment_config_from_json(nlohmann::json::object())
                                        : load_experiment_config(f.config);
  if (!f.model.empty()) {
    const bool default_batch = c.run.train.batch_size == default_batch_size(c.run.model);
    c.run.model = f.model;
    if (default_batch) c.run.train.batch_size = default_batch_size(f.model);
  }
  if (!f.input.empty()) c.dataset = f.input;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed) (seed_is_split ? c.split_seed : c.run.train.seed) = *f.seed;
  if (!f.fusion.empty()) c.eval.fusion = parse_fusion(f.fusion);
  if (f.observed_pct) c.observed_pcts = {*f.observed_pct};
  if (!f.mode.empty()) c.modes = {parse_mode(f.mode)};
  if (f.cutoff) c.cutoff = *f.cutoff;
  if (f.jobs) c.jobs = *f.jobs;
  return c;
}

Dataset load_filtered(const ExperimentConfig& c) {
  if (c.dataset.empty()) throw Error("no dataset given (config 'dataset' or --input)");
  std::vector<std::string> warnings;
  auto ds = parse_canonical(fs::path(c.dataset), &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return filter(ds);
}

Split require_split(const ExperimentConfig& c) {
  const auto path = c.split_path();
  if (!fs::exists(path)) throw Error("missing split file " + path.string() + " (run 'ktbench preprocess' first)");
  return load_split(path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

nlohmann::json stats_json(const DatasetStats& s) {
  nlohmann::json j = {{"interactions", s.interactions}, {"sequences", s.sequences}, {"questions", s.questions},
                      {"kcs", s.kcs}};
  if (s.avg_kcs_per_question) j["avg_kcs_per_question"] = *s.avg_kcs_per_question;
  return j;
}

int cmd_preprocess(const Flags& f) {
  auto c = experiment(f, true);
  if (f.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  const auto ds = load_filtered(c);
  const auto report = validate(ds);
  if (!report.empty())
    std::cerr << "warning: " << report.violations.size() << " validation violations remain after filtering\n";
  const fs::path out(c.output_dir);
  fs::create_directories(out);
  write_canonical(ds, out / "dataset.csv");
  const auto split = split_students(ds, c.split_seed);
  save_split(split, c.split_path());
  const auto stats = compute_stats(ds);
  write_text(out / "stats.json", stats_json(stats).dump(2) + "\n");
  std::cout << stats_json(stats).dump() << '\n';
  std::cout << "wrote " << (out / "dataset.csv").string() << " and " << c.split_path().string() << '\n';
  return 0;
}

int cmd_simulate(const Flags& f) {
  SimConfig sim = f.config.empty() ? SimConfig{} : sim_config_from_json(nlohmann::json::parse(std::ifstream(f.config)));
  if (f.seed) sim.seed = *f.seed;
  sim.check();
  if (f.print_config) {
    std::cout << to_json(sim).dump(2) << '\n';
    return 0;
  }
  const fs::path csv = f.out.empty() ? fs::path("sim.csv") : fs::path(f.out);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  write_simulation(sim, simulate(sim), csv);
  std::cout << "wrote " << csv.string() << " and " << csv.string() << ".sim.json\n";
  return 0;
}

void print_record(const RunRecord& r) {
  std::cout << r.config_hash << ' ' << r.spec.model << " val_auc " << format_mean_std(mean_std(r.val_aucs()));
  if (!r.test_aucs().empty()) std::cout << " test_auc " << format_mean_std(mean_std(r.test_aucs()));
  std::cout << '\n';
}

RunRecord train_and_save(const Dataset& ds, const Split& split, const RunSpec& spec, const ExperimentConfig& c) {
  const fs::path out(c.output_dir);
  const auto hash = config_hash(spec);
  CrossValidateOptions opt;
  opt.checkpoint_dir = out / "models" / hash;
  opt.eval = c.eval;
  opt.cutoff = c.cutoff;
  opt.jobs = c.jobs;
  auto record = cross_validate(ds, split, spec, opt);
  save_run_record(record, out / "runs" / (hash + ".json"));
  return record;
}

int cmd_train(const Flags& f) {
  auto c = experiment(f, false);
  if (f.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  const auto ds = load_filtered(c);
  const auto split = require_split(c);
  print_record(train_and_save(ds, split, c.run, c));
  return 0;
}

int cmd_sweep(const Flags& f) {
  Flags g = f;
  g.seed.reset();
  auto c = experiment(g, false);
  if (f.seed) c.sweep.seed = *f.seed;
  if (f.print_config) {
    if (c.sweep.space.empty()) c.sweep.space = default_search_space(c.run.model);
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  const auto ds = load_filtered(c);
  const auto split = require_split(c);
  const auto result = sweep(ds, split, c.run, c.sweep, c.jobs);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  const fs::path out(c.output_dir);
  for (const auto& t : result.trials) save_run_record(t, out / "sweep" / (t.config_hash + ".json"));
  write_text(out / "sweep.json", to_json(result).dump(2) + "\n");
  for (const auto& t : result.trials) print_record(t);
  // Only the selected configuration is retrained with test evaluation.
  const auto& best = result.trials[result.best];
  std::cout << "best " << best.config_hash << "; evaluating on test students\n";
  print_record(train_and_save(ds, split, best.spec, c));
  return 0;
}

std::vector<RunRecord> runs_to_use(const ExperimentConfig& c) {
  auto records = load_run_records(fs::path(c.output_dir) / "runs");
  if (records.empty()) throw Error("no runs under " + (fs::path(c.output_dir) / "runs").string());
  return records;
}

int cmd_evaluate(const Flags& f) {
  auto c = experiment(f, false);
  if (f.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  const auto ds = load_filtered(c);
  const auto split = require_split(c);
  const fs::path out = fs::path(c.output_dir) / "eval";
  for (const auto& record : runs_to_use(c)) {
    if (!f.model.empty() && record.spec.model != f.model) continue;
    auto report = evaluate_run(ds, split, record, c);
    for (auto& fold : report.folds) {
      std::ostringstream csv;
      write_predictions_csv(fold.one_step.records, ds, csv);
      write_text(out / (record.config_hash + "_fold" + std::to_string(fold.fold) + "_predictions.csv"), csv.str());
      fold.one_step.records.clear();
    }
    const auto j = to_json(report);
    write_text(out / (record.config_hash + ".json"), j.dump(2) + "\n");
    std::cout << record.config_hash << ' ' << record.spec.model << " auc " << j["summary"]["auc"].get<std::string>()
              << " accuracy " << j["summary"]["accuracy"].get<std::string>() << '\n';
  }
  return 0;
}

int cmd_audit(const Flags& f) {
  auto c = experiment(f, false);
  if (f.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  const auto ds = load_filtered(c);
  const auto split = require_split(c);
  std::ostringstream csv;
  csv << "config_hash,model,fold,all_in_one_kc_auc,one_by_one_kc_auc,delta_auc\n";
  csv.precision(17);
  std::map<std::string, std::vector<double>> deltas;
  for (const auto& record : runs_to_use(c)) {
    if (!f.model.empty() && record.spec.model != f.model) continue;
    for (const auto& row : audit_run(ds, split, record)) {
      csv << row.config_hash << ',' << row.model << ',' << row.fold << ',' << row.audit.all_in_one.auc << ','
          << row.audit.one_by_one.auc << ',' << row.audit.delta_auc << '\n';
      deltas[row.model].push_back(row.audit.delta_auc);
    }
  }
  write_text(fs::path(c.output_dir) / "leakage.csv", csv.str());
  for (const auto& [model, d] : deltas) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", mean_std(d).mean);
    std::cout << model << " gain " << buf << '\n';
  }
  return 0;
}

int cmd_report(const Flags& f) {
  auto c = experiment(f, false);
  if (f.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  std::ostringstream csv;
  write_report_csv(build_report(runs_to_use(c)), csv);
  write_text(fs::path(c.output_dir) / "report.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"ktbench: knowledge tracing benchmark"};
  app.require_subcommand(1, 1);
  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"preprocess", "filter a canonical CSV and write the student split"},
      {"simulate", "generate a synthetic dataset"},
      {"train", "5-fold cross validation of one configuration"},
      {"evaluate", "one-step and multi-step test evaluation of trained runs"},
      {"sweep", "random hyperparameter search on validation folds"},
      {"audit-leakage", "one-by-one vs all-in-one KC-level AUC"},
      {"report", "mean/std table over runs with significance markers"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_flags(subs[name], flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (subs["preprocess"]->parsed()) return cmd_preprocess(flags);
    if (subs["simulate"]->parsed()) return cmd_simulate(flags);
    if (subs["train"]->parsed()) return cmd_train(flags);
    if (subs["evaluate"]->parsed()) return cmd_evaluate(flags);
    if (subs["sweep"]->parsed()) return cmd_sweep(flags);
    if (subs["audit-leakage"]->parsed()) return cmd_audit(flags);
    if (subs["report"]->parsed()) return cmd_report(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ktbench
