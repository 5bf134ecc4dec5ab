#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include <json.hpp>

#include "rmc/curve.hpp"
#include "rmc/data.hpp"
#include "rmc/evalkit.hpp"

namespace rmc {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

namespace detail {

inline json parse_document(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size()); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw FormatError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed document (" +
                      e.what() + ")");
  }
}

// Typed field access that reports which field failed.
class Reader {
 public:
  Reader(const json& j, std::string origin) : j_(j), origin_(std::move(origin)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw FormatError(origin_ + (field.empty() ? "" : ": field '" + field + "'") + ": " + msg);
  }

  const json& at(const std::string& field) const {
    auto it = j_.find(field);
    if (it == j_.end()) fail(field, "missing");
    return *it;
  }

  bool has(const std::string& field) const { return j_.contains(field); }

  template <class T>
  T get(const std::string& field) const {
    const json& v = at(field);
    try {
      if constexpr (std::is_same_v<T, Real>) {
        if (!v.is_number()) fail(field, "expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(field, "expected an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(field, "expected a string");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(field, "expected a boolean");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(field, e.what());
    }
  }

  std::vector<Real> reals(const std::string& field) const { return reals_of(at(field), field); }

  std::vector<Real> reals_of(const json& v, const std::string& field) const {
    if (!v.is_array()) fail(field, "expected an array of numbers");
    std::vector<Real> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(field + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<Real>());
    }
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  const json& j_;
  std::string origin_;
};

inline void check_version(const Reader& r) {
  const json& v = r.at("format_version");
  if (!v.is_number_integer() || v.get<long long>() != kFormatVersion)
    r.fail("format_version", "unsupported version " + v.dump() + " (expected " + std::to_string(kFormatVersion) + ")");
}

inline std::string reals_line(std::span<const Real> v) { return json(std::vector<Real>(v.begin(), v.end())).dump(); }

}  // namespace detail

// ---- datasets ----

inline std::string dataset_to_text(const Dataset& ds) {
  std::ostringstream o;
  o << "{\n";
  o << "\"format_version\": " << kFormatVersion << ",\n";
  o << "\"kind\": " << json(ds.meta.kind).dump() << ",\n";
  o << "\"seed\": " << ds.meta.seed << ",\n";
  o << "\"n\": " << ds.size() << ",\n";
  o << "\"n_total\": " << ds.meta.n_total << ",\n";
  o << "\"d\": " << ds.dim() << ",\n";
  o << "\"classes\": " << ds.classes << ",\n";
  o << "\"noise\": " << json(ds.meta.noise).dump() << ",\n";
  o << "\"split\": \"" << split_name(ds.split) << "\",\n";
  o << "\"y\": " << json(ds.y).dump() << ",\n";
  o << "\"x\": [\n";
  for (std::size_t r = 0; r < ds.size(); ++r) o << detail::reals_line(ds.x.row(r)) << (r + 1 < ds.size() ? ",\n" : "\n");
  o << "]\n}\n";
  return o.str();
}

inline Dataset dataset_from_text(const std::string& text, const std::string& origin = "<dataset>") {
  const json doc = detail::parse_document(text, origin);
  const detail::Reader r(doc, origin);
  detail::check_version(r);
  Dataset ds;
  ds.meta.kind = r.get<std::string>("kind");
  ds.meta.seed = r.get<std::uint64_t>("seed");
  ds.meta.n_total = r.get<std::size_t>("n_total");
  ds.meta.noise = r.get<Real>("noise");
  ds.classes = r.get<std::size_t>("classes");
  const auto n = r.get<std::size_t>("n");
  const auto d = r.get<std::size_t>("d");
  const auto split = r.get<std::string>("split");
  if (split == "train") {
    ds.split = Split::train;
  } else if (split == "test") {
    ds.split = Split::test;
  } else {
    r.fail("split", "expected 'train' or 'test', got '" + split + "'");
  }
  const json& y = r.at("y");
  if (!y.is_array() || y.size() != n) r.fail("y", "expected an array of " + std::to_string(n) + " labels");
  for (std::size_t i = 0; i < n; ++i) {
    if (!y[i].is_number_integer()) r.fail("y[" + std::to_string(i) + "]", "expected an integer label");
    const auto l = y[i].get<long long>();
    if (l < 0 || static_cast<std::size_t>(l) >= ds.classes) r.fail("y[" + std::to_string(i) + "]", "label out of range");
    ds.y.push_back(static_cast<Label>(l));
  }
  const json& x = r.at("x");
  if (!x.is_array() || x.size() != n) r.fail("x", "expected " + std::to_string(n) + " rows");
  if (n == 0 || d == 0) r.fail("n", "dataset must be nonempty");
  ds.x = Tensor({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const std::string f = "x[" + std::to_string(i) + "]";
    const auto row = r.reals_of(x[i], f);
    if (row.size() != d) r.fail(f, "expected " + std::to_string(d) + " values");
    for (std::size_t k = 0; k < d; ++k) {
      if (row[k] < 0.0 || row[k] > 1.0) r.fail(f, "feature outside [0, 1]");
      ds.x.row(i)[k] = row[k];
    }
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) { write_text(path, dataset_to_text(ds)); }

inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_text(read_text(path), path.string());
}

// A dataset argument is either a file or a directory holding train.json/test.json.
inline Dataset load_dataset_split(const std::filesystem::path& path, Split split) {
  if (std::filesystem::is_directory(path)) return load_dataset(path / (split_name(split) + ".json"));
  return load_dataset(path);
}

inline void save_dataset_pair(const DatasetPair& pair, const std::filesystem::path& dir) {
  save_dataset(pair.train, dir / "train.json");
  save_dataset(pair.test, dir / "test.json");
}

// ---- checkpoints ----

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string stage_id;
  int epochs_trained = 0;
  std::string command_line;
  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  std::variant<ModelParams, CurveParams> body;
  CheckpointMeta meta;

  bool is_curve() const { return std::holds_alternative<CurveParams>(body); }
  const ModelParams& model() const {
    if (auto* m = std::get_if<ModelParams>(&body)) return *m;
    throw UsageError("checkpoint holds a curve, expected a model");
  }
  const CurveParams& curve() const {
    if (auto* c = std::get_if<CurveParams>(&body)) return *c;
    throw UsageError("checkpoint holds a model, expected a curve");
  }
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline json arch_to_json(const ArchSpec& a) {
  json layers = json::array();
  for (const auto& l : a.layers)
    layers.push_back({{"in", l.in_dim}, {"out", l.out_dim}, {"activation", l.activation == Activation::relu ? "relu" : "identity"}});
  return {{"layers", layers}};
}

inline ArchSpec arch_from_json(const json& j, const std::string& origin) {
  const detail::Reader r(j, origin + ": arch");
  const json& layers = r.at("layers");
  if (!layers.is_array() || layers.empty()) r.fail("layers", "expected a nonempty array");
  ArchSpec a;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const detail::Reader lr(layers[k], origin + ": arch.layers[" + std::to_string(k) + "]");
    DenseLayer l;
    l.in_dim = lr.get<std::size_t>("in");
    l.out_dim = lr.get<std::size_t>("out");
    const auto act = lr.get<std::string>("activation");
    if (act == "relu") {
      l.activation = Activation::relu;
    } else if (act == "identity") {
      l.activation = Activation::identity;
    } else {
      lr.fail("activation", "unknown activation '" + act + "'");
    }
    a.layers.push_back(l);
  }
  try {
    a.validate();
  } catch (const UsageError& e) {
    throw FormatError(origin + ": arch: " + e.what());
  }
  return a;
}

inline std::string checkpoint_to_text(const Checkpoint& c) {
  const ArchSpec& arch = c.is_curve() ? c.curve().arch() : c.model().arch;
  std::ostringstream o;
  o << "{\n";
  o << "\"format_version\": " << kFormatVersion << ",\n";
  o << "\"kind\": \"" << (c.is_curve() ? "curve" : "model") << "\",\n";
  o << "\"arch\": " << arch_to_json(arch).dump() << ",\n";
  const json meta{{"seed", c.meta.seed},
                  {"stage_id", c.meta.stage_id},
                  {"epochs_trained", c.meta.epochs_trained},
                  {"command_line", c.meta.command_line}};
  o << "\"meta\": " << meta.dump() << ",\n";
  if (c.is_curve()) {
    o << "\"theta_start\": " << detail::reals_line(c.curve().theta_start.flat.values()) << ",\n";
    o << "\"theta_control\": " << detail::reals_line(c.curve().theta_control.flat.values()) << ",\n";
    o << "\"theta_end\": " << detail::reals_line(c.curve().theta_end.flat.values()) << "\n";
  } else {
    o << "\"params\": " << detail::reals_line(c.model().flat.values()) << "\n";
  }
  o << "}\n";
  return o.str();
}

inline Checkpoint checkpoint_from_text(const std::string& text, const std::string& origin = "<checkpoint>") {
  const json doc = detail::parse_document(text, origin);
  const detail::Reader r(doc, origin);
  detail::check_version(r);
  const ArchSpec arch = arch_from_json(r.at("arch"), origin);
  auto block = [&](const std::string& field) {
    auto v = r.reals(field);
    if (v.size() != arch.param_count())
      r.fail(field, "expected " + std::to_string(arch.param_count()) + " parameters, got " + std::to_string(v.size()));
    return ModelParams(arch, Tensor::vector(std::move(v)));
  };
  Checkpoint c;
  const detail::Reader mr(r.at("meta"), origin + ": meta");
  c.meta.seed = mr.get<std::uint64_t>("seed");
  c.meta.stage_id = mr.get<std::string>("stage_id");
  c.meta.epochs_trained = mr.get<int>("epochs_trained");
  c.meta.command_line = mr.get<std::string>("command_line");
  const auto kind = r.get<std::string>("kind");
  if (kind == "model") {
    c.body = block("params");
  } else if (kind == "curve") {
    c.body = CurveParams(block("theta_start"), block("theta_control"), block("theta_end"));
  } else {
    r.fail("kind", "expected 'model' or 'curve', got '" + kind + "'");
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_text(path, checkpoint_to_text(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_text(read_text(path), path.string());
}

// ---- reports ----

inline json report_to_json(const EvalReport& r) {
  json j{{"std_acc", r.std_acc}, {"dlr", r.dlr}, {"union_acc", r.union_acc}, {"msd_acc", r.msd_acc},
         {"loss_clean", r.loss_clean}};
  for (Norm p : {Norm::linf, Norm::l2, Norm::l1})
    j["acc_" + std::string(norm_name(p))] = r.acc(p) ? json(*r.acc(p)) : json(nullptr);
  return j;
}

}  // namespace rmc
