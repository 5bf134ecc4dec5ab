#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rmc/cli.hpp"
#include "test_util.hpp"

using namespace rmc;
using rmc::testing::random_model;
using rmc::testing::scratch_dir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Checkpoint, ModelAndCurveRoundTrip) {
  const auto arch = ArchSpec::mlp({4, 7, 3});
  const Checkpoint m{random_model(arch, 1), {42, "3", 30, "rmc train-at --seed 42"}};
  EXPECT_EQ(checkpoint_from_text(checkpoint_to_text(m)), m);
  const Checkpoint c{CurveParams{random_model(arch, 2), random_model(arch, 3), random_model(arch, 4)},
                     {7, "5", 20, "rmc rmc"}};
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(c, dir / "sub" / "curve.json");
  const auto back = load_checkpoint(dir / "sub" / "curve.json");
  EXPECT_EQ(back, c);
  EXPECT_TRUE(back.is_curve());
  EXPECT_THROW(back.model(), UsageError);
}

TEST(Checkpoint, CorruptFilesNameTheProblem) {
  const auto arch = ArchSpec::mlp({4, 7, 3});
  const std::string text = checkpoint_to_text({random_model(arch, 1), {}});
  EXPECT_THROW(checkpoint_from_text(text.substr(0, text.size() - 20)), FormatError);
  auto j = nlohmann::json::parse(text);
  j["params"].erase(0);
  try {
    checkpoint_from_text(j.dump());
    FAIL() << "expected a throw";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("params"), std::string::npos);
  }
}

TEST(Cli, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("pipeline"), std::string::npos);
  EXPECT_EQ(run_cli({"sweep", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"no-such-command"}).code, 2);
  EXPECT_EQ(run_cli({"eval", "--model", "x.json"}).code, 2);  // --data missing
  const auto missing = run_cli({"eval", "--model", "/nonexistent/m.json", "--data", "/nonexistent", "--out", "r.json"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_FALSE(missing.err.empty());
}

TEST(Cli, EndToEndSmallRun) {
  const auto dir = scratch_dir("cli_e2e");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_cli({"gen-data", "--n", "120", "--d", "4", "--classes", "3", "--seed", "1", "--out", data}).code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "train.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "test.json"));

  const std::string a = (dir / "a.json").string(), b = (dir / "b.json").string();
  auto ra = run_cli({"train-at", "--data", data, "--norms", "linf", "--epochs", "2", "--steps", "3", "--seed", "1",
                     "--out", a, "--log", (dir / "a.csv").string()});
  ASSERT_EQ(ra.code, 0) << ra.err;
  EXPECT_EQ(line_count(read_text(dir / "a.csv")), 3u);  // header + 2 epochs
  ASSERT_EQ(run_cli({"train-at", "--data", data, "--norms", "none", "--epochs", "2", "--seed", "2", "--out", b}).code, 0);
  EXPECT_EQ(load_checkpoint(a).model().arch.to_string(), "4-32-32-3");
  EXPECT_EQ(load_checkpoint(a).meta.epochs_trained, 2);

  const std::string curve = (dir / "curve.json").string();
  auto rc = run_cli({"rmc", "--a", a, "--b", b, "--data", data, "--norms", "linf,l2", "--epochs", "1", "--steps", "2",
                     "--out", curve});
  ASSERT_EQ(rc.code, 0) << rc.err;
  EXPECT_TRUE(load_checkpoint(curve).is_curve());

  const std::string csv = (dir / "sweep.csv").string();
  auto rs = run_cli({"sweep", "--curve", curve, "--data", data, "--norms", "linf,l2", "--grid", "3", "--steps", "2",
                     "--out", csv});
  ASSERT_EQ(rs.code, 0) << rs.err;
  const std::string table = read_text(csv);
  EXPECT_EQ(line_count(table), 4u);
  EXPECT_EQ(table.substr(0, table.find('\n')), SweepTable::kHeader);

  const std::string report = (dir / "report.json").string();
  ASSERT_EQ(run_cli({"eval", "--model", a, "--data", data, "--norms", "linf,l2,l1", "--steps", "2", "--out", report}).code,
            0);
  const auto j = nlohmann::json::parse(read_text(report));
  for (const char* key : {"std_acc", "acc_linf", "acc_l2", "acc_l1", "dlr", "union_acc", "msd_acc"}) {
    ASSERT_TRUE(j.contains(key)) << key;
    EXPECT_GE(j[key].get<Real>(), 0.0);
    EXPECT_LE(j[key].get<Real>(), 1.0);
  }
  EXPECT_LE(j["union_acc"].get<Real>(), j["dlr"].get<Real>());

  const std::string pair = (dir / "pair").string();
  ASSERT_EQ(run_cli({"srmc", "--base", a, "--data", data, "--norm", "l2", "--epochs", "1", "--steps", "2",
                     "--out-pair", pair})
                .code,
            0);
  EXPECT_EQ(load_checkpoint(dir / "pair" / "start.json").model(), load_checkpoint(a).model());
  EXPECT_NE(load_checkpoint(dir / "pair" / "end.json").model(), load_checkpoint(a).model());

  // A bad model for this dataset is reported, not crashed on.
  const std::string wrong = (dir / "wrong.json").string();
  save_checkpoint({random_model(ArchSpec::mlp({5, 4, 3}), 1), {}}, wrong);
  EXPECT_NE(run_cli({"eval", "--model", wrong, "--data", data, "--out", report}).code, 0);
}

TEST(Cli, UnknownNormNamedInMessage) {
  const auto dir = scratch_dir("cli_norm");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run_cli({"gen-data", "--n", "60", "--d", "4", "--classes", "2", "--out", data}).code, 0);
  const auto r = run_cli({"srmc", "--base", "x.json", "--data", data, "--norm", "l7", "--out-pair", "p"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("l7"), std::string::npos);
  const auto r1 = run_cli({"train-at", "--data", data, "--norm", "l7", "--out", (dir / "m.json").string()});
  EXPECT_EQ(r1.code, 2);
  EXPECT_NE(r1.err.find("l7"), std::string::npos);
  const auto r2 = run_cli({"train-at", "--data", data, "--norms", "linf,l7", "--out", (dir / "m.json").string()});
  EXPECT_EQ(r2.code, 2);
  EXPECT_NE(r2.err.find("l7"), std::string::npos);
}

TEST(Cli, PipelineConfigErrors) {
  const auto dir = scratch_dir("cli_cfg");
  auto write = [&](const std::string& name, const std::string& body) {
    write_text(dir / name, body);
    return (dir / name).string();
  };
  const auto malformed = run_cli({"pipeline", "--config", write("bad.json", "{\"T\": 3,"), "--workdir",
                                  (dir / "w1").string()});
  EXPECT_EQ(malformed.code, 2);
  EXPECT_NE(malformed.err.find("bad.json"), std::string::npos);
  const auto wrong_type = run_cli({"pipeline", "--config", write("type.json", "{\"T\": \"many\"}"), "--workdir",
                                   (dir / "w2").string()});
  EXPECT_EQ(wrong_type.code, 2);
  EXPECT_NE(wrong_type.err.find("T"), std::string::npos);
  const auto bad_norm = run_cli({"pipeline", "--config", write("norm.json", "{\"norms\": [\"linf\", \"l9\"]}"),
                                 "--workdir", (dir / "w3").string()});
  EXPECT_EQ(bad_norm.code, 2);
  EXPECT_NE(bad_norm.err.find("l9"), std::string::npos);
}

TEST(Cli, PipelineSmokeWithGeneratedData) {
  const auto dir = scratch_dir("cli_pipe");
  const std::string cfg = R"({"dataset": {"n": 120, "d": 4, "classes": 3, "seed": 2},
    "arch": "4-8-3", "T": 1, "rmc_epochs": 1, "grid_n": 3, "train_steps": 2, "eval_steps": 2})";
  write_text(dir / "cfg.json", cfg);
  const auto r = run_cli({"pipeline", "--config", (dir / "cfg.json").string(), "--workdir", (dir / "work").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lineage = nlohmann::json::parse(read_text(dir / "work" / "lineage.json"));
  EXPECT_EQ(lineage["status"], "complete");
  EXPECT_FALSE(r.out.empty());
}

TEST(Cli, GradcheckReportsError) {
  const auto r = run_cli({"gradcheck", "--arch", "4-6-3", "--seed", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("max_rel_err"), std::string::npos);
}
