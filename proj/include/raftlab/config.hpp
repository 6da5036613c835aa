#pragma once
// JSON run configuration. Keys are snake_case and mirror the C++ field
// names; unknown keys are rejected with the full key path in the message.

#include <filesystem>
#include <string>

#include "raftlab/data.hpp"
#include "raftlab/eval.hpp"
#include "raftlab/train.hpp"

namespace raftlab {

enum class DataKind { Blobs, Cifar10 };

struct DataConfig {
    DataKind kind = DataKind::Blobs;
    BlobsSpec blobs;
    std::filesystem::path cifar_path;
};

Dataset load_dataset(const DataConfig& cfg);

struct RunConfig {
    TrainConfig train;
    DataConfig data;
    ProbeConfig probe;
    /// Pairs used by the evaluation report.
    std::size_t eval_samples = 256;
};

/// Starts from defaults and overwrites the fields present in `text`.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration, every field present.
std::string to_json(const RunConfig& cfg, int indent = 2);

}  // namespace raftlab
