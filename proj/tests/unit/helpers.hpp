#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <doctest.h>

#include "raftlab/rng.hpp"
#include "raftlab/tensor.hpp"

namespace testutil {

inline raftlab::Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) {
    return raftlab::Tensor::matrix(r, c, std::move(v));
}

inline raftlab::Tensor normal(raftlab::Shape shape, raftlab::Rng& rng) {
    raftlab::Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.normal();
    return t;
}

inline raftlab::Tensor unit_rows(raftlab::Tensor t) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        double n = 0.0;
        for (double v : t.row(r)) n += v * v;
        n = std::sqrt(n);
        for (double& v : t.row(r)) v /= n;
    }
    return t;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("raftlab_unit_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
