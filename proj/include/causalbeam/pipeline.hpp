// SPDX-License-Identifier: Apache-2.0
//
// Run configuration and the file-based pipeline stages behind the CLI.

#pragma once

#include "causalbeam/eval.hpp"
#include "causalbeam/mlp.hpp"
#include "causalbeam/scene.hpp"
#include "causalbeam/selection.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace causalbeam {

struct SelectConfig {
    SelectMethod method = SelectMethod::causal;
    std::size_t m_tilde = 13;
    double threshold = 0.05;
    std::size_t n_perms = 256;
};

struct BenchConfig {
    std::vector<BenchMethod> methods = {BenchMethod::causal,     BenchMethod::correlation,
                                        BenchMethod::shapley,    BenchMethod::random,
                                        BenchMethod::exhaustive, BenchMethod::quantized_mrt};
    std::vector<std::size_t> grid = {4, 8, 13, 16, 24, 32};
    unsigned mrt_phase_bits = 3;
    std::size_t overhead_users = 0;
};

/// Flat `section.key = value` configuration. Every stochastic component gets
/// its seed from `seed` through a named sub-stream.
struct RunConfig {
    std::string profile = "desk";
    SceneConfig scene;
    TrainConfig train;
    SeConfig se;
    SelectConfig select;
    BenchConfig bench;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::size_t workers = 0;

    /// "desk" (default) or "table1".
    static RunConfig from_profile(std::string_view name);

    /// Sets one key; throws ConfigError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    /// Applies `key = value` lines (comments start with '#').
    void apply_text(const std::string &text);
    void apply_file(const std::string &path);
    /// CAUSALBEAM_SCENE_N_USERS=622 sets scene.n_users: the prefix is
    /// stripped, the name is lower-cased and, when it starts with a section
    /// name (scene, train, se, select, bench), the '_' after the section
    /// becomes '.'. CAUSALBEAM_SEED and CAUSALBEAM_OUT_DIR set top-level keys.
    void apply_environment(const char *const *envp);

    /// Copies `seed` into the scene and training seeds; each component then
    /// draws from its own named sub-stream of it.
    void resolve_seeds();
    void validate() const;

    /// Every key with its current value, in key order.
    std::map<std::string, std::string> echo() const;
    EvalConfig eval_config() const;
};

inline constexpr std::string_view kEnvPrefix = "CAUSALBEAM_";

// Output file names inside the output directory.
inline constexpr std::string_view kDatasetFile = "dataset.txt";
inline constexpr std::string_view kManifestFile = "manifest.txt";
inline constexpr std::string_view kGraphFile = "graph.txt";
inline constexpr std::string_view kSelectionFile = "selection.txt";
inline constexpr std::string_view kModelFile = "model.txt";
inline constexpr std::string_view kHistoryFile = "history.csv";
inline constexpr std::string_view kEvalFile = "eval.json";
inline constexpr std::string_view kBenchCsvFile = "bench.csv";
inline constexpr std::string_view kBenchJsonFile = "bench.json";
inline constexpr std::string_view kTimingFile = "timing.csv";

/// Exclusive ownership of an output directory for the lifetime of the object.
/// The directory must already exist; a second owner fails with ConfigError.
class OutputDir {
  public:
    explicit OutputDir(const std::string &path);
    ~OutputDir();
    OutputDir(const OutputDir &) = delete;
    OutputDir &operator=(const OutputDir &) = delete;

    std::string file(std::string_view name) const;

  private:
    std::string path_;
    std::string lock_;
};

/// CRC-32 of a file's bytes, as 8 lowercase hex digits.
std::string file_checksum(const std::string &path);

void cmd_gen(const RunConfig &cfg);
void cmd_discover(const RunConfig &cfg, const std::string &dataset_path);
/// Shapley selection needs `model_path` (a model trained on all features);
/// causal selection reuses `graph_path` when given.
void cmd_select(const RunConfig &cfg, const std::string &dataset_path,
                const std::optional<std::string> &graph_path,
                const std::optional<std::string> &model_path);
/// Trains on the selection's beams, or on all beams without a selection.
void cmd_train(const RunConfig &cfg, const std::string &dataset_path,
               const std::optional<std::string> &selection_path);
void cmd_eval(const RunConfig &cfg, const std::string &dataset_path, const std::string &model_path,
              const std::optional<std::string> &selection_path);
/// Generates the dataset first when `dataset_path` is empty.
void cmd_bench(const RunConfig &cfg, const std::optional<std::string> &dataset_path);

/// Process exit codes used by the CLI.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitNumerical = 4,
    kExitInternal = 5,
};

} // namespace causalbeam
