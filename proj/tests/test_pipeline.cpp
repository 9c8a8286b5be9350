// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/errors.hpp"
#include "causalbeam/pipeline.hpp"
#include "causalbeam/textio.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

using namespace causalbeam;
namespace fs = std::filesystem;

namespace {

/// Fresh empty directory, removed at scope exit.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &tag)
        : path(fs::temp_directory_path() / ("causalbeam_" + tag + "_" + std::to_string(::getpid())))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(std::string_view f) const { return (path / f).string(); }
};

RunConfig smoke(const std::string &out)
{
    RunConfig c = RunConfig::from_profile("desk");
    c.set("scene.n_users", "100");
    c.set("train.epochs", "3");
    c.set("select.n_perms", "4");
    c.out_dir = out;
    c.resolve_seeds();
    return c;
}

int run_cli(const std::string &args)
{
    const std::string cmd = std::string(CAUSALBEAM_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("profiles")
{
    const RunConfig desk = RunConfig::from_profile("desk");
    CHECK(desk.scene.n_users == 8000);
    const RunConfig t1 = RunConfig::from_profile("table1");
    CHECK(t1.scene.n_bs == 32);
    CHECK(t1.scene.n_bs * t1.scene.oversampling == 128);
    CHECK(t1.train.learning_rate == 1e-3);
    CHECK(t1.train.epochs == 100);
    CHECK(static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(t1.scene.n_users))) == 57144);
    CHECK_THROWS_AS(RunConfig::from_profile("laptop"), ConfigError);
}

TEST_CASE("config text, overrides and validation")
{
    RunConfig c;
    c.apply_text("# comment\nscene.n_users = 622\n\nse.k=2  # trailing\nbench.grid = 1..3,8\n"
                 "bench.methods = causal, random\ntrain.select_best_val = false\n");
    CHECK(c.scene.n_users == 622);
    CHECK(c.se.k == 2);
    CHECK(c.bench.grid == std::vector<std::size_t>{1, 2, 3, 8});
    CHECK(c.bench.methods == std::vector<BenchMethod>{BenchMethod::causal, BenchMethod::random});
    CHECK_FALSE(c.train.select_best_val);
    CHECK_NOTHROW(c.validate());

    CHECK_THROWS_AS(c.apply_text("scene.n_user = 3\n"), ConfigError);
    CHECK_THROWS_AS(c.apply_text("scene.n_users 3\n"), ConfigError);
    CHECK_THROWS_AS(c.set("train.learning_rate", "fast"), ConfigError);
    CHECK_THROWS_AS(c.set("select.method", "magic"), ConfigError);
    try {
        c.apply_text("seed = 1\nse.k = -1\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError &e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    RunConfig v;
    v.select.m_tilde = 33;
    CHECK_THROWS_AS(v.validate(), ConfigError);
    v = RunConfig{};
    v.bench.grid = {0};
    CHECK_THROWS_AS(v.validate(), ConfigError);
    v = RunConfig{};
    v.train.batch_size = 0;
    CHECK_THROWS_AS(v.validate(), ConfigError);
}

TEST_CASE("environment overrides")
{
    const char *env[] = {"PATH=/bin", "CAUSALBEAM_SCENE_N_USERS=321", "CAUSALBEAM_SEED=99",
                         "CAUSALBEAM_OUT_DIR=/tmp/x", "CAUSALBEAM_SE_T_FRAME=0.02", nullptr};
    RunConfig c;
    c.apply_environment(env);
    CHECK(c.scene.n_users == 321);
    CHECK(c.seed == 99);
    CHECK(c.out_dir == "/tmp/x");
    CHECK(c.se.t_frame == 0.02);
    const char *bad[] = {"CAUSALBEAM_SCENE_BOGUS=1", nullptr};
    CHECK_THROWS_AS(c.apply_environment(bad), ConfigError);
}

TEST_CASE("echo lists every settable key")
{
    RunConfig c;
    const auto e = c.echo();
    CHECK(e.at("scene.y_classes") == "128");
    CHECK(e.at("train.learning_rate") == "0.001");
    RunConfig d;
    for (const auto &[k, v] : e) {
        if (k == "scene.y_classes")
            continue;
        CHECK_NOTHROW(d.set(k, v));
    }
    CHECK(d.echo() == e);
}

TEST_CASE("output directory lock")
{
    TempDir t("lock");
    {
        OutputDir a(t.path.string());
        CHECK_THROWS_AS(OutputDir(t.path.string()), ConfigError);
        CHECK(a.file("x.txt") == t / "x.txt");
    }
    CHECK_NOTHROW(OutputDir(t.path.string()));
    CHECK_THROWS_AS(OutputDir(t / "missing"), ConfigError);
}

TEST_CASE("crc32 checksum")
{
    TempDir t("crc");
    textio::write_file(t / "f", "123456789");
    CHECK(file_checksum(t / "f") == "cbf43926");
}

TEST_CASE("stage commands hand off through files")
{
    TempDir t("stages");
    RunConfig c = smoke(t.path.string());
    cmd_gen(c);
    const Dataset d = load_dataset(t / kDatasetFile);
    CHECK(d.size() == 100);
    const std::string manifest = textio::read_file(t / kManifestFile);
    CHECK(manifest.find("checksum_crc32 " + file_checksum(t / kDatasetFile)) != std::string::npos);
    CHECK(manifest.find("scene.n_users = 100") != std::string::npos);

    cmd_discover(c, t / kDatasetFile);
    const std::string graph = textio::read_file(t / kGraphFile);
    CHECK(load_graph(t / kGraphFile).p() == 33);
    cmd_discover(c, t / kDatasetFile);
    CHECK(textio::read_file(t / kGraphFile) == graph);

    c.select.m_tilde = 6;
    cmd_select(c, t / kDatasetFile, t / kGraphFile, std::nullopt);
    const SelectionResult s = load_selection(t / kSelectionFile);
    CHECK(s.selected.size() == 6);
    CHECK(s.method == SelectMethod::causal);

    cmd_train(c, t / kDatasetFile, t / kSelectionFile);
    CHECK(load_model(t / kModelFile).input_dim() == 6);
    const std::string hist = textio::read_file(t / kHistoryFile);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 4);

    c.se.k = 2;
    cmd_eval(c, t / kDatasetFile, t / kModelFile, t / kSelectionFile);
    const auto j = nlohmann::json::parse(textio::read_file(t / kEvalFile));
    CHECK(j["top2"].get<double>() >= j["top1"].get<double>());
    CHECK(j["n_b"] == 8);
    CHECK_THROWS_AS(cmd_eval(c, t / kDatasetFile, t / kModelFile, std::nullopt), ConfigError);

    // Shapley selection uses a full-input model.
    c.select.method = SelectMethod::shapley;
    CHECK_THROWS_AS(cmd_select(c, t / kDatasetFile, std::nullopt, std::nullopt), ConfigError);
    cmd_train(c, t / kDatasetFile, std::nullopt);
    cmd_select(c, t / kDatasetFile, std::nullopt, t / kModelFile);
    CHECK(load_selection(t / kSelectionFile).method == SelectMethod::shapley);
}

TEST_CASE("missing output directory fails before any work")
{
    TempDir t("missing");
    RunConfig c = smoke(t / "nope");
    CHECK_THROWS_AS(cmd_gen(c), ConfigError);
    CHECK_FALSE(fs::exists(t / "nope"));
}

TEST_CASE("schema mismatches name expected and found")
{
    TempDir t("schema");
    RunConfig c = smoke(t.path.string());
    cmd_gen(c);
    try {
        cmd_discover(c, t / kManifestFile);
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        const std::string w = e.what();
        CHECK(w.find("causalbeam-dataset 1") != std::string::npos);
        CHECK(w.find("causalbeam-manifest 1") != std::string::npos);
    }
}

TEST_CASE("bench writes one row per method and grid point")
{
    TempDir t("bench");
    RunConfig c = smoke(t.path.string());
    c.set("bench.methods", "causal,random");
    c.set("bench.grid", "8,13");
    cmd_bench(c, std::nullopt);
    const std::string csv = textio::read_file(t / kBenchCsvFile);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(fs::exists(t / kBenchJsonFile));
    CHECK(fs::exists(t / kGraphFile));
    CHECK(fs::exists(t / kTimingFile));
}

TEST_CASE("command line exit codes")
{
    TempDir t("cli");
    const std::string out = "--out " + t.path.string();
    CHECK(run_cli("--help") == kExitOk);
    CHECK(run_cli("") == kExitUsage);
    CHECK(run_cli("frobnicate") == kExitUsage);
    CHECK(run_cli("--out " + (t / "missing") + " gen") == kExitConfig);
    CHECK(run_cli(out + " --set scene.n_users=-4 gen") == kExitConfig);
    CHECK(run_cli(out + " --set scene.n_users=100 --seed 4 gen") == kExitOk);
    CHECK(load_dataset(t / kDatasetFile).seed == 4);
    textio::write_file(t / "broken.txt", "causalbeam-dataset 1\nm_w 3\n");
    CHECK(run_cli(out + " discover " + (t / "broken.txt")) == kExitData);
    CHECK(run_cli(out + " discover " + (t / "absent.txt")) == kExitData);

    // Two identical columns make the regression singular.
    Dataset d = load_dataset(t / kDatasetFile);
    d.rssi.col(1) = d.rssi.col(0);
    save_dataset(d, t / "collinear.txt");
    CHECK(run_cli(out + " discover " + (t / "collinear.txt")) == kExitNumerical);

    textio::write_file(t / "cfg.txt", "scene.n_users = 120\n");
    CHECK(run_cli(out + " --config " + (t / "cfg.txt") + " gen") == kExitOk);
    CHECK(load_dataset(t / kDatasetFile).size() == 120);
    ::setenv("CAUSALBEAM_SCENE_N_USERS", "130", 1);
    CHECK(run_cli(out + " gen") == kExitOk);
    ::unsetenv("CAUSALBEAM_SCENE_N_USERS");
    CHECK(load_dataset(t / kDatasetFile).size() == 130);
}
