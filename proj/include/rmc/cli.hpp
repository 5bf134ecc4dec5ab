#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmc/rmc.hpp"

namespace rmc::cli {

inline std::vector<Norm> parse_norm_list(const std::string& text) {
  std::vector<Norm> out;
  if (text == "none" || text.empty()) return out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const Norm p = parse_norm(tok);
    for (Norm q : out) require(q != p, "norm '" + tok + "' listed twice");
    out.push_back(p);
  }
  return out;
}

struct AttackFlags {
  Real delta_linf = 0.05;
  Real delta_l2 = 0.2;
  Real delta_l1 = 0.6;
  int steps = 10;

  void add(CLI::App* app, int default_steps) {
    steps = default_steps;
    app->add_option("--delta-linf", delta_linf, "linf budget")->capture_default_str();
    app->add_option("--delta-l2", delta_l2, "l2 budget")->capture_default_str();
    app->add_option("--delta-l1", delta_l1, "l1 budget")->capture_default_str();
    app->add_option("--steps", steps, "attack iterations")->capture_default_str();
  }

  std::vector<AttackSpec> specs(const std::vector<Norm>& norms) const {
    std::vector<AttackSpec> out;
    for (Norm p : norms) {
      const Real d = p == Norm::linf ? delta_linf : (p == Norm::l2 ? delta_l2 : delta_l1);
      require(d > 0.0, "attack budget for " + std::string(norm_name(p)) + " must be positive");
      require(steps >= 1, "--steps must be at least 1");
      out.push_back(AttackSpec::make(p, d, steps));
    }
    return out;
  }
};

inline std::string join_args(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

inline void print_log(std::ostream& err, const std::vector<EpochRecord>& log) {
  for (const auto& e : log)
    err << "epoch " << e.epoch << " train_loss " << format_real(e.train_loss) << " wall_seconds " << e.wall_seconds
        << "\n";
}

inline void write_log_csv(const std::string& path, const std::vector<EpochRecord>& log) {
  std::string s = "epoch,train_loss,wall_seconds\n";
  for (const auto& e : log) s += std::to_string(e.epoch) + "," + format_real(e.train_loss) + "," + format_real(e.wall_seconds) + "\n";
  write_text(path, s);
}

// Entry point; args excludes the program name. Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Robust mode connectivity toolkit: adversarial training, Bezier path search and diversified lp robustness evaluation"};
  app.name("rmc");
  app.require_subcommand(1);
  const std::string cmdline = join_args(args);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory (train.json, test.json)");
  std::string gen_kind = "gaussian_blobs", gen_out;
  std::size_t gen_n = 2000, gen_d = 8, gen_classes = 3;
  Real gen_noise = 0.08;
  std::uint64_t gen_seed = 0;
  gen->add_option("--kind", gen_kind, "gaussian_blobs | two_rings")->capture_default_str();
  gen->add_option("--n", gen_n, "total samples")->capture_default_str();
  gen->add_option("--d", gen_d, "feature dimension")->capture_default_str();
  gen->add_option("--classes", gen_classes, "class count")->capture_default_str();
  gen->add_option("--noise", gen_noise, "noise scale")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->required();

  // train-at
  auto* tat = app.add_subcommand("train-at", "Adversarial training (none, single-norm PGD, or MSD)");
  std::string tat_data, tat_arch, tat_norms = "linf", tat_out, tat_init, tat_log;
  int tat_epochs = 30;
  Real tat_lr = 0.1;
  std::size_t tat_batch = 64;
  std::uint64_t tat_seed = 0;
  AttackFlags tat_attack;
  tat->add_option("--data", tat_data, "dataset directory or file")->required();
  tat->add_option("--arch", tat_arch, "layer widths, e.g. 8-32-32-3 (default <d>-32-32-<classes>)");
  tat->add_option("--norms,--norm", tat_norms, "comma list of linf,l2,l1 or 'none'")->capture_default_str();
  tat->add_option("--epochs", tat_epochs)->capture_default_str();
  tat->add_option("--lr", tat_lr)->capture_default_str();
  tat->add_option("--batch", tat_batch)->capture_default_str();
  tat->add_option("--seed", tat_seed)->capture_default_str();
  tat->add_option("--out", tat_out, "output checkpoint")->required();
  tat->add_option("--init", tat_init, "initial model checkpoint");
  tat->add_option("--log", tat_log, "per-epoch CSV log");
  tat_attack.add(tat, 10);

  // rmc
  auto* rmcc = app.add_subcommand("rmc", "Train a Bezier connection between two models");
  std::string rmc_a, rmc_b, rmc_data, rmc_norms = "linf,l2", rmc_out, rmc_log;
  int rmc_epochs = 20;
  Real rmc_lr = 0.01;
  std::size_t rmc_batch = 64;
  std::uint64_t rmc_seed = 0;
  AttackFlags rmc_attack;
  rmcc->add_option("--a", rmc_a, "start model checkpoint")->required();
  rmcc->add_option("--b", rmc_b, "end model checkpoint")->required();
  rmcc->add_option("--data", rmc_data)->required();
  rmcc->add_option("--norms,--norm", rmc_norms, "comma list, or 'none' for plain mode connectivity")->capture_default_str();
  rmcc->add_option("--epochs", rmc_epochs)->capture_default_str();
  rmcc->add_option("--lr", rmc_lr)->capture_default_str();
  rmcc->add_option("--batch", rmc_batch)->capture_default_str();
  rmcc->add_option("--seed", rmc_seed)->capture_default_str();
  rmcc->add_option("--out", rmc_out, "output curve checkpoint")->required();
  rmcc->add_option("--log", rmc_log, "per-epoch CSV log");
  rmc_attack.add(rmcc, 10);

  // srmc
  auto* srmc = app.add_subcommand("srmc", "Fine-tune a base model under another norm to form an endpoint pair");
  std::string srmc_base, srmc_data, srmc_norm = "l2", srmc_out;
  int srmc_epochs = 5;
  Real srmc_lr = 0.1;
  std::size_t srmc_batch = 64;
  std::uint64_t srmc_seed = 0;
  AttackFlags srmc_attack;
  srmc->add_option("--base", srmc_base)->required();
  srmc->add_option("--data", srmc_data)->required();
  srmc->add_option("--norm", srmc_norm)->capture_default_str();
  srmc->add_option("--epochs", srmc_epochs)->capture_default_str();
  srmc->add_option("--lr", srmc_lr)->capture_default_str();
  srmc->add_option("--batch", srmc_batch)->capture_default_str();
  srmc->add_option("--seed", srmc_seed)->capture_default_str();
  srmc->add_option("--out-pair", srmc_out, "directory receiving start.json and end.json")->required();
  srmc_attack.add(srmc, 10);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Evaluate a curve on a uniform t grid and write CSV");
  std::string sw_curve, sw_data, sw_norms = "linf,l2", sw_out;
  std::size_t sw_grid = 21;
  AttackFlags sw_attack;
  sweep->add_option("--curve", sw_curve)->required();
  sweep->add_option("--data", sw_data)->required();
  sweep->add_option("--norms,--norm", sw_norms)->capture_default_str();
  sweep->add_option("--grid", sw_grid)->capture_default_str();
  sweep->add_option("--out", sw_out, "CSV path")->required();
  sw_attack.add(sweep, 50);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate one model: standard, per-norm, dlr, union and msd accuracy");
  std::string ev_model, ev_data, ev_norms = "linf,l2,l1", ev_out;
  AttackFlags ev_attack;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--norms,--norm", ev_norms)->capture_default_str();
  ev->add_option("--out", ev_out, "JSON report path")->required();
  ev_attack.add(ev, 50);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run the staged robust-connectivity optimization");
  std::string pipe_config, pipe_workdir;
  int pipe_jobs = 1;
  pipe->add_option("--config", pipe_config, "pipeline JSON config")->required();
  pipe->add_option("--workdir", pipe_workdir, "output directory")->required();
  pipe->add_option("--jobs", pipe_jobs, "concurrent independent stages")->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of parameter and input gradients");
  std::string gc_arch = "8-16-3";
  std::uint64_t gc_seed = 0;
  gc->add_option("--arch", gc_arch)->capture_default_str();
  gc->add_option("--seed", gc_seed)->capture_default_str();

  try {
    std::vector<const char*> argv{"rmc"};
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'rmc --help' for usage\n";
    return 2;
  }

  try {
    auto default_arch = [](const Dataset& d) { return ArchSpec::mlp({d.dim(), 32, 32, d.classes}); };

    if (gen->parsed()) {
      const auto pair = generate_dataset(parse_dataset_kind(gen_kind), gen_n, gen_d, gen_classes, gen_noise, gen_seed);
      save_dataset_pair(pair, gen_out);
      out << "wrote " << pair.train.size() << " train and " << pair.test.size() << " test samples to " << gen_out << "\n";
    } else if (tat->parsed()) {
      const auto norms = parse_norm_list(tat_norms);
      const Dataset train = load_dataset_split(tat_data, Split::train);
      ModelParams init;
      if (!tat_init.empty()) {
        init = load_checkpoint(tat_init).model();
        require(tat_arch.empty() || ArchSpec::parse(tat_arch) == init.arch, "--arch disagrees with --init checkpoint");
      } else {
        const ArchSpec arch = tat_arch.empty() ? default_arch(train) : ArchSpec::parse(tat_arch);
        RngStream rng = RngStream::derive(tat_seed, 0x1417ULL);
        init = init_params(arch, rng);
      }
      TrainConfig cfg{tat_lr, tat_epochs, tat_batch, tat_seed, true};
      const auto res = adversarial_train(init, train, cfg, tat_attack.specs(norms));
      save_checkpoint({res.params, {tat_seed, "train-at", tat_epochs, cmdline}}, tat_out);
      print_log(err, res.log);
      if (!tat_log.empty()) write_log_csv(tat_log, res.log);
    } else if (rmcc->parsed()) {
      const auto norms = parse_norm_list(rmc_norms);
      const Dataset train = load_dataset_split(rmc_data, Split::train);
      const ModelParams a = load_checkpoint(rmc_a).model();
      const ModelParams b = load_checkpoint(rmc_b).model();
      TrainConfig cfg{rmc_lr, rmc_epochs, rmc_batch, rmc_seed, true};
      const auto res = rmc_train(a, b, train, cfg, rmc_attack.specs(norms));
      save_checkpoint({res.curve, {rmc_seed, "rmc", rmc_epochs, cmdline}}, rmc_out);
      print_log(err, res.log);
      if (!rmc_log.empty()) write_log_csv(rmc_log, res.log);
    } else if (srmc->parsed()) {
      const Norm p = parse_norm(srmc_norm);
      const Dataset train = load_dataset_split(srmc_data, Split::train);
      const Checkpoint base = load_checkpoint(srmc_base);
      TrainConfig cfg{srmc_lr, srmc_epochs, srmc_batch, srmc_seed, true};
      const auto [start, end] = srmc_endpoints(base.model(), train, cfg, srmc_attack.specs({p}).front());
      const std::filesystem::path dir(srmc_out);
      save_checkpoint({start, base.meta}, dir / "start.json");
      save_checkpoint({end, {srmc_seed, "srmc", base.meta.epochs_trained + srmc_epochs, cmdline}}, dir / "end.json");
      out << "wrote " << (dir / "start.json").string() << " and " << (dir / "end.json").string() << "\n";
    } else if (sweep->parsed()) {
      const auto norms = parse_norm_list(sw_norms);
      require(!norms.empty(), "sweep needs at least one norm");
      const Dataset test = load_dataset_split(sw_data, Split::test);
      const CurveParams curve = load_checkpoint(sw_curve).curve();
      const auto table = path_sweep(curve, test, sw_attack.specs(norms), sw_grid);
      write_text(sw_out, table.to_csv());
      const auto& best = table.best();
      out << "best dlr " << format_real(best.report.dlr) << " at t=" << format_real(best.t) << "\n";
    } else if (ev->parsed()) {
      const auto norms = parse_norm_list(ev_norms);
      require(!norms.empty(), "eval needs at least one norm");
      const Dataset test = load_dataset_split(ev_data, Split::test);
      const ModelParams model = load_checkpoint(ev_model).model();
      const auto rep = evaluate(model, test, ev_attack.specs(norms));
      write_text(ev_out, report_to_json(rep).dump(2) + "\n");
      out << report_to_json(rep).dump() << "\n";
    } else if (pipe->parsed()) {
      require(pipe_jobs >= 1, "--jobs must be at least 1");
      const std::filesystem::path cfg_path(pipe_config);
      const json doc = detail::parse_document(read_text(cfg_path), cfg_path.string());
      const PipelineConfig cfg = pipeline_config_from_json(doc, cfg_path.string());
      DatasetPair data;
      if (doc.contains("data")) {
        require(doc["data"].is_string(), "config field 'data' must be a path");
        std::filesystem::path p = doc["data"].get<std::string>();
        if (p.is_relative()) p = cfg_path.parent_path() / p;
        data.train = load_dataset_split(p, Split::train);
        data.test = load_dataset_split(p, Split::test);
      } else {
        const json g = doc.value("dataset", json::object());
        require(g.is_object(), "config field 'dataset' must be an object");
        data = generate_dataset(parse_dataset_kind(g.value("kind", "gaussian_blobs")), g.value("n", std::size_t{2000}),
                                g.value("d", std::size_t{8}), g.value("classes", std::size_t{3}),
                                g.value("noise", 0.08), g.value("seed", std::uint64_t{0}));
      }
      PipelineOptions opt{std::filesystem::path(pipe_workdir), pipe_jobs, cmdline, [&err](const StageRecord& s) {
                            err << "stage " << s.stage_id << " (" << stage_kind_name(s.kind) << ", step " << s.step
                                << ") done\n";
                          }};
      const auto res = run_rmc_optimization(cfg, data.train, data.test, opt);
      out << "final dlr " << format_real(res.final_best_dlr()) << " at t=" << format_real(res.t_opt)
          << " (first-round best " << format_real(res.first_best_dlr()) << ")\n";
    } else if (gc->parsed()) {
      const auto rep = gradcheck(ArchSpec::parse(gc_arch), gc_seed);
      out << "max_rel_err " << format_real(rep.max_rel_err) << " checked " << rep.checked << " skipped "
          << rep.skipped << "\n";
      if (rep.max_rel_err > 1e-4) {
        err << "gradient check failed: max relative error " << rep.max_rel_err << " > 1e-4\n";
        return 1;
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rmc::cli
