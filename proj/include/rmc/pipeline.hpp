#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "rmc/evalkit.hpp"
#include "rmc/io.hpp"
#include "rmc/train.hpp"

namespace rmc {

struct Region {
  Real t_lo = 0.0;
  Real t_hi = 1.0;
  Real t_star = 0.0;
};

// [t* - w, t* + w] clipped to [0, 1], where t* maximizes the dlr column
// (smallest t on ties).
inline Region select_optimal_region(const SweepTable& sweep, Real w) {
  require(!sweep.rows.empty(), "cannot select a region from an empty sweep");
  require(w > 0.0 && w < 0.5, "region half-width must lie in (0, 0.5)");
  const Real t = sweep.best().t;
  return {std::max(0.0, t - w), std::min(1.0, t + w), t};
}

struct PipelineConfig {
  std::vector<Norm> norms{Norm::linf, Norm::l2};
  int T = 30;               // epochs per AT stage
  int rmc_epochs = 20;      // epochs per connection
  std::size_t grid_n = 21;  // sweep resolution
  Real region_width = 0.03;
  int mid_points = 1;
  bool srmc = false;
  int srmc_epochs = 5;
  std::uint64_t seed = 0;

  ArchSpec arch = ArchSpec::mlp({8, 32, 32, 3});
  Real lr_at = 0.1;
  Real lr_rmc = 0.01;
  std::size_t batch_size = 64;
  int train_steps = 10;  // attack iterations during training
  int eval_steps = 50;   // attack iterations during sweeps
  std::array<Real, 3> deltas{0.05, 0.2, 0.6};  // indexed by Norm
  // Connections for three norms; each pair's missing norm trains the next branch.
  std::vector<std::array<Norm, 2>> pairs{{Norm::l2, Norm::l1}, {Norm::linf, Norm::l1}};

  Real delta(Norm p) const { return deltas[static_cast<std::size_t>(p)]; }
  AttackSpec train_spec(Norm p) const { return AttackSpec::make(p, delta(p), train_steps); }
  AttackSpec eval_spec(Norm p) const { return AttackSpec::make(p, delta(p), eval_steps); }

  std::vector<AttackSpec> train_specs(std::span<const Norm> ps) const {
    std::vector<AttackSpec> out;
    for (Norm p : ps) out.push_back(train_spec(p));
    return out;
  }
  std::vector<AttackSpec> eval_specs(std::span<const Norm> ps) const {
    std::vector<AttackSpec> out;
    for (Norm p : ps) out.push_back(eval_spec(p));
    return out;
  }

  void validate() const {
    require(norms.size() >= 2 && norms.size() <= 3, "pipeline needs 2 or 3 norms");
    for (std::size_t i = 0; i < norms.size(); ++i)
      for (std::size_t j = i + 1; j < norms.size(); ++j) require(norms[i] != norms[j], "pipeline norms must be distinct");
    require(T >= 0 && rmc_epochs >= 0 && srmc_epochs >= 0, "epoch counts must be nonnegative");
    require(grid_n >= 3, "grid_n must be at least 3");
    require(region_width > 0.0 && region_width < 0.5, "region_width must lie in (0, 0.5)");
    require(mid_points == 1 || mid_points == 2, "mid_points must be 1 or 2");
    require(lr_at > 0.0 && lr_rmc > 0.0, "learning rates must be positive");
    require(batch_size >= 1, "batch size must be positive");
    require(train_steps >= 1 && eval_steps >= 1, "attack step counts must be positive");
    for (Real d : deltas) require(std::isfinite(d) && d > 0.0, "attack budgets must be positive");
    arch.validate();
    if (norms.size() == 3) {
      require(pairs.size() == 2, "three-norm pipelines need exactly two connection pairs");
      require(held_out(pairs[0]) != held_out(pairs[1]), "connection pairs must hold out different norms");
    }
  }

  // The configured norm missing from a pair.
  Norm held_out(const std::array<Norm, 2>& pair) const {
    for (Norm p : norms)
      if (p != pair[0] && p != pair[1]) return p;
    throw UsageError("connection pair must use two of the configured norms");
  }
};

inline PipelineConfig pipeline_config_from_json(const json& j, const std::string& origin = "<config>") {
  const detail::Reader r(j, origin);
  PipelineConfig c;
  auto wrap = [&](auto&& fn) {
    try {
      fn();
    } catch (const FormatError& e) {
      throw UsageError(e.what());
    }
  };
  wrap([&] {
    if (r.has("norms")) {
      const json& ns = r.at("norms");
      if (!ns.is_array()) r.fail("norms", "expected an array");
      c.norms.clear();
      for (const auto& n : ns) {
        if (!n.is_string()) r.fail("norms", "expected norm names");
        c.norms.push_back(parse_norm(n.get<std::string>()));
      }
    }
    if (r.has("T")) c.T = r.get<int>("T");
    if (r.has("rmc_epochs")) c.rmc_epochs = r.get<int>("rmc_epochs");
    if (r.has("grid_n")) c.grid_n = r.get<std::size_t>("grid_n");
    if (r.has("region_width")) c.region_width = r.get<Real>("region_width");
    if (r.has("mid_points")) c.mid_points = r.get<int>("mid_points");
    if (r.has("srmc")) c.srmc = r.get<bool>("srmc");
    if (r.has("srmc_epochs")) c.srmc_epochs = r.get<int>("srmc_epochs");
    if (r.has("seed")) c.seed = r.get<std::uint64_t>("seed");
    if (r.has("arch")) c.arch = ArchSpec::parse(r.get<std::string>("arch"));
    if (r.has("lr_at")) c.lr_at = r.get<Real>("lr_at");
    if (r.has("lr_rmc")) c.lr_rmc = r.get<Real>("lr_rmc");
    if (r.has("batch")) c.batch_size = r.get<std::size_t>("batch");
    if (r.has("train_steps")) c.train_steps = r.get<int>("train_steps");
    if (r.has("eval_steps")) c.eval_steps = r.get<int>("eval_steps");
    for (Norm p : {Norm::linf, Norm::l2, Norm::l1}) {
      const std::string key = "delta_" + std::string(norm_name(p));
      if (r.has(key)) c.deltas[static_cast<std::size_t>(p)] = r.get<Real>(key);
    }
    if (r.has("pairs")) {
      const json& ps = r.at("pairs");
      if (!ps.is_array()) r.fail("pairs", "expected an array of norm pairs");
      c.pairs.clear();
      for (const auto& p : ps) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
          r.fail("pairs", "each pair must be two norm names");
        c.pairs.push_back({parse_norm(p[0].get<std::string>()), parse_norm(p[1].get<std::string>())});
      }
    }
  });
  c.validate();
  return c;
}

enum class StageKind { at, rmc, srmc, select };

inline std::string stage_kind_name(StageKind k) {
  switch (k) {
    case StageKind::at: return "at";
    case StageKind::rmc: return "rmc";
    case StageKind::srmc: return "srmc";
    case StageKind::select: return "select";
  }
  return "?";
}

struct StageRecord {
  int stage_id = 0;
  StageKind kind = StageKind::at;
  int step = 0;  // position in the six-step schedule
  std::vector<int> parent_ids;
  std::string artifact_path;
  std::optional<Real> chosen_t;
  std::vector<Norm> norms;  // perturbations used by the stage
  json metrics = json::object();
};

struct Lineage {
  std::vector<StageRecord> stages;
  std::string status = "running";

  const StageRecord& stage(int id) const {
    for (const auto& s : stages)
      if (s.stage_id == id) return s;
    throw UsageError("unknown stage id " + std::to_string(id));
  }

  std::vector<int> roots() const {
    std::vector<int> out;
    for (const auto& s : stages)
      if (s.parent_ids.empty()) out.push_back(s.stage_id);
    return out;
  }

  // Parents always precede children.
  bool is_acyclic() const {
    for (std::size_t i = 0; i < stages.size(); ++i)
      for (int p : stages[i].parent_ids) {
        bool earlier = false;
        for (std::size_t k = 0; k < i; ++k) earlier = earlier || stages[k].stage_id == p;
        if (!earlier) return false;
      }
    return true;
  }

  json to_json() const {
    json st = json::array();
    for (const auto& s : stages) {
      json norms = json::array();
      for (Norm p : s.norms) norms.push_back(norm_name(p));
      st.push_back({{"stage_id", s.stage_id},
                    {"kind", stage_kind_name(s.kind)},
                    {"step", s.step},
                    {"parent_ids", s.parent_ids},
                    {"artifact_path", s.artifact_path},
                    {"chosen_t", s.chosen_t ? json(*s.chosen_t) : json(nullptr)},
                    {"norms", norms},
                    {"metrics", s.metrics}});
    }
    return {{"format_version", kFormatVersion}, {"status", status}, {"stages", st}};
  }
};

struct PipelineOptions {
  std::optional<std::filesystem::path> workdir;
  int jobs = 1;
  std::string command_line;
  // Invoked after each stage is recorded; an exception aborts the run.
  std::function<void(const StageRecord&)> on_stage;
};

struct PipelineResult {
  ModelParams final_params;
  Real t_opt = 0.0;
  Lineage lineage;
  std::vector<SweepTable> first_sweeps;  // one per first-round connection
  SweepTable final_sweep;

  Real first_best_dlr() const {
    Real best = 0.0;
    for (const auto& s : first_sweeps) best = std::max(best, s.best().report.dlr);
    return best;
  }
  Real final_best_dlr() const { return final_sweep.best().report.dlr; }
};

namespace detail {

inline json train_log_json(const std::vector<EpochRecord>& log) {
  json a = json::array();
  for (const auto& e : log) a.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}});
  return a;
}

class PipelineRun {
 public:
  PipelineRun(const PipelineConfig& cfg, const Dataset& train, const Dataset& select, const PipelineOptions& opt)
      : cfg_(cfg), train_(train), select_(select), opt_(opt) {}

  PipelineResult run() {
    try {
      execute();
      result_.lineage.status = "complete";
      persist_lineage();
    } catch (...) {
      result_.lineage.status = "failed";
      persist_lineage();
      throw;
    }
    return std::move(result_);
  }

 private:
  struct Produced {
    StageRecord record;
    std::optional<ModelParams> model;
    std::optional<CurveParams> curve;
    std::optional<SweepTable> sweep;
    Real wall_seconds = 0.0;
  };

  std::uint64_t stage_seed(int id) const { return splitmix64_mix(cfg_.seed ^ static_cast<std::uint64_t>(id)); }

  TrainConfig train_cfg(int id, Real lr, int epochs) const {
    TrainConfig t;
    t.lr = lr;
    t.epochs = epochs;
    t.batch_size = std::min(cfg_.batch_size, train_.size());
    t.seed = stage_seed(id);
    return t;
  }

  std::string artifact(int id) const { return "stage_" + std::to_string(id) + "/checkpoint.json"; }

  Produced at_stage(int id, int step, std::vector<int> parents, Norm p, const ModelParams& init, int epochs,
                    StageKind kind) const {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<AttackSpec> specs{cfg_.train_spec(p)};
    auto res = adversarial_train(init, train_, train_cfg(id, cfg_.lr_at, epochs), specs);
    Produced out;
    out.record = {id, kind, step, std::move(parents), artifact(id), std::nullopt, {p}, json::object()};
    out.record.metrics["epochs"] = epochs;
    out.record.metrics["train_log"] = train_log_json(res.log);
    const auto eval_specs = cfg_.eval_specs(cfg_.norms);
    out.record.metrics["eval"] = report_to_json(evaluate(res.params, select_, eval_specs));
    out.model = std::move(res.params);
    out.wall_seconds = elapsed(t0);
    return out;
  }

  Produced rmc_stage(int id, int step, std::vector<int> parents, const ModelParams& a, const ModelParams& b,
                     std::vector<Norm> norms) const {
    const auto t0 = std::chrono::steady_clock::now();
    const auto specs = cfg_.train_specs(norms);
    auto res = rmc_train(a, b, train_, train_cfg(id, cfg_.lr_rmc, cfg_.rmc_epochs), specs);
    Produced out;
    out.record = {id, StageKind::rmc, step, std::move(parents), artifact(id), std::nullopt, std::move(norms),
                  json::object()};
    out.record.metrics["epochs"] = cfg_.rmc_epochs;
    out.record.metrics["train_log"] = train_log_json(res.log);
    out.curve = std::move(res.curve);
    out.wall_seconds = elapsed(t0);
    return out;
  }

  static Real elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
  }

  // Runs two independent stages, concurrently when jobs allow.
  std::pair<Produced, Produced> run_pair(const std::function<Produced()>& a, const std::function<Produced()>& b) const {
    if (opt_.jobs >= 2) {
      auto fa = std::async(std::launch::async, a);
      Produced pb = b();
      return {fa.get(), std::move(pb)};
    }
    Produced pa = a();
    return {std::move(pa), b()};
  }

  void commit(Produced p) {
    if (opt_.workdir) {
      const auto dir = *opt_.workdir / ("stage_" + std::to_string(p.record.stage_id));
      std::filesystem::create_directories(dir);
      CheckpointMeta meta{stage_seed(p.record.stage_id), std::to_string(p.record.stage_id),
                          p.record.metrics.value("epochs", 0), opt_.command_line};
      if (p.curve) {
        save_checkpoint({*p.curve, meta}, dir / "checkpoint.json");
      } else if (p.model) {
        save_checkpoint({*p.model, meta}, dir / "checkpoint.json");
      }
      if (p.sweep) write_text(dir / "sweep.csv", p.sweep->to_csv());
      write_text(dir / "metrics.json", p.record.metrics.dump(2) + "\n");
      timing_[std::to_string(p.record.stage_id)] = p.wall_seconds;
    }
    result_.lineage.stages.push_back(std::move(p.record));
    persist_lineage();
    if (opt_.on_stage) opt_.on_stage(result_.lineage.stages.back());
  }

  void persist_lineage() const {
    if (!opt_.workdir) return;
    write_text(*opt_.workdir / "lineage.json", result_.lineage.to_json().dump(2) + "\n");
    write_text(*opt_.workdir / "timing.json", timing_.dump(2) + "\n");
  }

  // Sweeps a curve and samples `count` candidate t values from optimal regions.
  // The second candidate comes from the best grid point outside the first region.
  std::vector<Produced> select_stages(int& next_id, int step, int parent, const CurveParams& curve,
                                      std::span<const Norm> norms, int count) const {
    const auto specs = cfg_.eval_specs(norms);
    SweepTable sweep = path_sweep(curve, select_, specs, cfg_.grid_n);
    std::vector<Region> regions{select_optimal_region(sweep, cfg_.region_width)};
    if (count == 2) {
      SweepTable rest;
      rest.grid_n = sweep.grid_n;
      for (const auto& row : sweep.rows)
        if (std::abs(row.t - regions[0].t_star) > 2.0 * cfg_.region_width) rest.rows.push_back(row);
      regions.push_back(rest.rows.empty() ? regions[0] : select_optimal_region(rest, cfg_.region_width));
    }
    std::vector<Produced> out;
    for (const auto& reg : regions) {
      const int id = next_id++;
      RngStream rng = RngStream::derive(cfg_.seed, 0x5e1ec7ULL + static_cast<std::uint64_t>(id));
      const Real t = reg.t_lo + (reg.t_hi - reg.t_lo) * rng.uniform();
      Produced p;
      p.record = {id, StageKind::select, step, {parent}, artifact(id), t, {norms.begin(), norms.end()}, json::object()};
      p.record.metrics["region"] = {reg.t_lo, reg.t_hi};
      p.record.metrics["t_star"] = reg.t_star;
      p.record.metrics["best_dlr"] = sweep.best().report.dlr;
      p.record.metrics["sample_eval"] = report_to_json(evaluate(curve_point(curve, t), select_, specs));
      p.model = curve_point(curve, t);
      p.sweep = sweep;
      out.push_back(std::move(p));
    }
    return out;
  }

  void execute() {
    cfg_.validate();
    require(train_.dim() == cfg_.arch.input_dim(), "dataset width does not match the pipeline architecture");
    require(select_.dim() == cfg_.arch.input_dim(), "selection dataset width does not match the architecture");
    if (opt_.workdir) std::filesystem::create_directories(*opt_.workdir);
    int next_id = 0;
    const auto& norms = cfg_.norms;

    // Step 1: one robust model per norm (or one base plus SRMC fine-tunes).
    std::vector<int> model_ids(norms.size());
    std::vector<ModelParams> models(norms.size());
    auto fresh_init = [&](int id) {
      RngStream rng = RngStream::derive(stage_seed(id), 0x1417ULL);
      return init_params(cfg_.arch, rng);
    };
    if (cfg_.srmc) {
      const int base_id = next_id++;
      Produced base = at_stage(base_id, 1, {}, norms[0], fresh_init(base_id), cfg_.T, StageKind::at);
      model_ids[0] = base_id;
      models[0] = *base.model;
      commit(std::move(base));
      for (std::size_t k = 1; k < norms.size(); ++k) {
        const int id = next_id++;
        Produced child = at_stage(id, 1, {base_id}, norms[k], models[0], cfg_.srmc_epochs, StageKind::srmc);
        model_ids[k] = id;
        models[k] = *child.model;
        commit(std::move(child));
      }
    } else {
      std::vector<int> ids;
      for (std::size_t k = 0; k < norms.size(); ++k) ids.push_back(next_id++);
      for (std::size_t k = 0; k < norms.size(); k += 2) {
        auto job = [&, k](std::size_t idx) {
          return [&, idx] { return at_stage(ids[idx], 1, {}, norms[idx], fresh_init(ids[idx]), cfg_.T, StageKind::at); };
        };
        if (k + 1 < norms.size()) {
          auto [a, b] = run_pair(job(k), job(k + 1));
          models[k] = *a.model;
          models[k + 1] = *b.model;
          commit(std::move(a));
          commit(std::move(b));
        } else {
          Produced a = job(k)();
          models[k] = *a.model;
          commit(std::move(a));
        }
      }
      model_ids = ids;
    }
    auto index_of = [&](Norm p) {
      for (std::size_t k = 0; k < norms.size(); ++k)
        if (norms[k] == p) return k;
      throw UsageError("norm not configured: " + std::string(norm_name(p)));
    };

    // Step 2: first-round connections.
    struct Connection {
      std::array<Norm, 2> pair;
      Norm held_out;
    };
    std::vector<Connection> conns;
    if (norms.size() == 2) {
      conns.push_back({{norms[0], norms[1]}, norms[0]});
    } else {
      for (const auto& p : cfg_.pairs) conns.push_back({p, cfg_.held_out(p)});
    }
    std::vector<int> curve_ids;
    std::vector<CurveParams> curves;
    {
      std::vector<std::function<Produced()>> jobs;
      std::vector<int> ids;
      for (const auto& c : conns) {
        const int id = next_id++;
        ids.push_back(id);
        const std::size_t ia = index_of(c.pair[0]), ib = index_of(c.pair[1]);
        jobs.push_back([&, id, ia, ib, c] {
          return rmc_stage(id, 2, {model_ids[ia], model_ids[ib]}, models[ia], models[ib], {c.pair[0], c.pair[1]});
        });
      }
      std::vector<Produced> done;
      if (jobs.size() == 2) {
        auto [a, b] = run_pair(jobs[0], jobs[1]);
        done.push_back(std::move(a));
        done.push_back(std::move(b));
      } else {
        done.push_back(jobs[0]());
      }
      for (auto& d : done) {
        curve_ids.push_back(d.record.stage_id);
        curves.push_back(*d.curve);
        commit(std::move(d));
      }
    }

    // Step 3: optimal regions and candidate samples.
    struct Candidate {
      int select_id;
      Real t;
      ModelParams params;
    };
    std::vector<std::vector<Candidate>> candidates(conns.size());
    for (std::size_t c = 0; c < conns.size(); ++c) {
      const int count = norms.size() == 2 ? cfg_.mid_points : 1;
      auto sel = select_stages(next_id, 3, curve_ids[c], curves[c], conns[c].pair, count);
      result_.first_sweeps.push_back(*sel.front().sweep);
      for (auto& s : sel) {
        candidates[c].push_back({s.record.stage_id, *s.record.chosen_t, *s.model});
        commit(std::move(s));
      }
    }

    // Step 4: branch AT from the sampled points with the held-out norms.
    struct Branch {
      Norm p;
      const Candidate* from;
    };
    std::vector<Branch> branches;
    if (norms.size() == 2) {
      auto& cs = candidates[0];
      if (cs.size() == 1) {
        branches = {{norms[0], &cs[0]}, {norms[1], &cs[0]}};
      } else {
        // Lower t lies nearer the norms[0] endpoint.
        const bool swap = cs[1].t < cs[0].t;
        branches = {{norms[0], &cs[swap ? 1 : 0]}, {norms[1], &cs[swap ? 0 : 1]}};
      }
    } else {
      branches = {{conns[0].held_out, &candidates[0][0]}, {conns[1].held_out, &candidates[1][0]}};
    }
    const int branch_a = next_id++;
    const int branch_b = next_id++;
    auto [ba, bb] = run_pair(
        [&] { return at_stage(branch_a, 4, {branches[0].from->select_id}, branches[0].p, branches[0].from->params, cfg_.T, StageKind::at); },
        [&] { return at_stage(branch_b, 4, {branches[1].from->select_id}, branches[1].p, branches[1].from->params, cfg_.T, StageKind::at); });
    const ModelParams end_a = *ba.model;
    const ModelParams end_b = *bb.model;
    commit(std::move(ba));
    commit(std::move(bb));

    // Step 5: final connection against every norm.
    const int final_curve_id = next_id++;
    Produced fc = rmc_stage(final_curve_id, 5, {branch_a, branch_b}, end_a, end_b, norms);
    const CurveParams final_curve = *fc.curve;
    commit(std::move(fc));

    // Step 6: optimal point on the final trajectory.
    const int final_id = next_id++;
    const auto specs = cfg_.eval_specs(norms);
    SweepTable sweep = path_sweep(final_curve, select_, specs, cfg_.grid_n);
    const SweepRow best = sweep.best();
    Produced fin;
    fin.record = {final_id, StageKind::select, 6, {final_curve_id}, artifact(final_id), best.t, norms, json::object()};
    fin.record.metrics["t_opt"] = best.t;
    fin.record.metrics["best_dlr"] = best.report.dlr;
    fin.record.metrics["eval"] = report_to_json(best.report);
    fin.model = curve_point(final_curve, best.t);
    fin.sweep = sweep;
    result_.final_params = *fin.model;
    result_.t_opt = best.t;
    result_.final_sweep = std::move(sweep);
    commit(std::move(fin));
  }

  const PipelineConfig& cfg_;
  const Dataset& train_;
  const Dataset& select_;
  const PipelineOptions& opt_;
  PipelineResult result_;
  json timing_ = json::object();
};

}  // namespace detail

// Staged population search: robust endpoints, robust connections, sampling
// from high-dlr regions, branch retraining, a final all-norm connection, and
// selection of the best point on it. `select` drives every sweep.
inline PipelineResult run_rmc_optimization(const PipelineConfig& cfg, const Dataset& train, const Dataset& select,
                                           const PipelineOptions& opt = {}) {
  return detail::PipelineRun(cfg, train, select, opt).run();
}

}  // namespace rmc
