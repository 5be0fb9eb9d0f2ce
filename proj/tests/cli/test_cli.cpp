#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "dosewise/io.hpp"
#include "dosewise/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("dosewise_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) {
    const std::string out = (dir_ / "stdout.txt").string(), err = (dir_ / "stderr.txt").string();
    const std::string cmd = std::string(DOSEWISE_CLI) + " " + args + " >" + out + " 2>" + err;
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = dosewise::read_file(out);
    r.err = dosewise::read_file(err);
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& body) const {
    dosewise::write_file(path(name), body);
  }

  fs::path dir_;
};

const std::string kConfig = DOSEWISE_CONFIG_DIR "/leukemia.json";

}  // namespace

TEST_F(Cli, UnknownConfigKeyIsExitTwoWithJson) {
  write("bad.json", R"({"schema_version": 1, "noise": {"typo": 1}})");
  const CliRun r = run("simulate --config " + path("bad.json") + " --out " + path("o"));
  EXPECT_EQ(r.code, 2);
  const json e = json::parse(r.err);
  EXPECT_EQ(e["error"]["kind"], "config");
  EXPECT_EQ(e["error"]["path"], "$.noise.typo");
}

TEST_F(Cli, MissingSubcommandOrFileIsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("simulate --config " + path("absent.json")).code, 2);
  EXPECT_EQ(run("simulate --format xml").code, 2);
}

TEST_F(Cli, SimulateIsByteIdentical) {
  for (const char* fmt : {"csv", "json"}) {
    const std::string f = fmt;
    ASSERT_EQ(run("simulate --config " + kConfig + " --seed 7 --format " + f + " --out " + path("a")).code, 0);
    ASSERT_EQ(run("simulate --config " + kConfig + " --seed 7 --format " + f + " --out " + path("b")).code, 0);
    const std::string a = dosewise::read_file(path("a/trajectory." + f));
    EXPECT_EQ(a, dosewise::read_file(path("b/trajectory." + f)));
    ASSERT_EQ(run("simulate --config " + kConfig + " --seed 8 --format " + f + " --out " + path("c")).code, 0);
    EXPECT_NE(a, dosewise::read_file(path("c/trajectory." + f)));
  }
  const std::string csv = dosewise::read_file(path("a/trajectory.csv"));
  EXPECT_EQ(csv.rfind("# command=simulate config_hash=", 0), 0u);
  EXPECT_NE(csv.find(" seed=7\n"), std::string::npos);
}

TEST_F(Cli, BadRegimenIsInputError) {
  write("short.json", "[85, 85]");
  const CliRun r = run("simulate --regimen " + path("short.json") + " --out " + path("o"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"]["kind"], "input");
}

TEST_F(Cli, CalibrateReportsWeights) {
  ASSERT_EQ(run("calibrate --format json --out " + path("o")).code, 0);
  const json j = json::parse(dosewise::read_file(path("o/calibration.json")));
  EXPECT_EQ(j["command"], "calibrate");
  EXPECT_TRUE(j.contains("config_hash"));
}

TEST_F(Cli, FilterFromMeasurementsAndSessionReplay) {
  write("m.csv", "day,wbc,anc\n0,2.9e9,1.4e9\n7,2.6e9,1.2e9\n");
  ASSERT_EQ(run("filter --measurements " + path("m.csv") + " --particles 40 --format json --out " +
                path("f")).code, 0);
  const json belief = json::parse(dosewise::read_file(path("f/belief.json")));
  EXPECT_EQ(belief["belief"]["particles"], 40);

  write("off.csv", "day,wbc,anc\n3,2.9e9,1.4e9\n");
  EXPECT_EQ(run("filter --measurements " + path("off.csv") + " --out " + path("g")).code, 2);

  // A session export replays to the exported belief.
  dosewise::service::SessionService svc(dosewise::load_config(kConfig));
  const std::string id = svc.create_session({{"seed", 4}, {"particles", 30}})["session"];
  svc.post_measurement(id, {{"day", 0}, {"wbc", 2.9e9}, {"anc", 1.4e9}});
  svc.post_measurement(id, {{"day", 7}, {"wbc", 2.5e9}, {"anc", 1.1e9}});
  const json exported = svc.export_session(id);
  write("session.json", exported.dump());
  ASSERT_EQ(run("filter --session " + path("session.json") + " --format json --out " + path("s")).code, 0);
  const json replayed = json::parse(dosewise::read_file(path("s/belief.json")));
  EXPECT_EQ(replayed["belief"], exported["belief"]);
}

TEST_F(Cli, ToyDpTableAndExitCode) {
  const CliRun r = run("toy-dp --grid 51 --out " + path("t"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("all toys within tolerance"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("t/toy_dp.csv")));
}
