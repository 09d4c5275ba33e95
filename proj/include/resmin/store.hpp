#pragma once

// Snapshot store on disk:
//
//   <dir>/manifest.json
//       { "version": 1, "state_dim": p, "param_dim": d,
//         "grid": { "t_points": [...], "sq_weights": [...] },
//         "snapshots": [ { "id": 0, "s": [...], "state_file": "...", "forcing_file": "..." } ],
//         "model": { ... optional, describes how to rebuild the forcing ... } }
//   <dir>/<state_file>, <dir>/<forcing_file>
//       CSV, header "t,x1,...,xp", one row per grid point, 17 significant digits.

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resmin/basis.hpp"
#include "resmin/errors.hpp"

namespace resmin {

inline constexpr int store_format_version = 1;

namespace store_detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_matrix_csv(const std::filesystem::path& path, const TimeGrid& grid, const Matrix& M) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path.string());
    out << "t";
    for (Eigen::Index c = 0; c < M.cols(); ++c) out << ",x" << (c + 1);
    out << '\n';
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        out << fmt17(grid.points[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < M.cols(); ++c) out << ',' << fmt17(M(r, c));
        out << '\n';
    }
    if (!out) throw IoFailure("failed writing " + path.string());
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline Matrix read_matrix_csv(const std::filesystem::path& path, const TimeGrid& grid, std::size_t p) {
    const std::string file = path.string();
    std::ifstream in(path);
    if (!in) throw LoadFailure(file, "file", "missing or unreadable");
    std::string line;
    if (!std::getline(in, line)) throw LoadFailure(file, "header", "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    if (header.size() != p + 1 || header[0] != "t")
        throw LoadFailure(file, "header", "expected t plus " + std::to_string(p) + " state columns");
    for (std::size_t c = 1; c <= p; ++c)
        if (header[c] != "x" + std::to_string(c)) throw LoadFailure(file, "header", "unexpected column " + header[c]);

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        const std::string where = "row " + std::to_string(rows.size() + 1);
        if (cells.size() != p + 1) throw LoadFailure(file, where, "expected " + std::to_string(p + 1) + " columns");
        std::vector<double> vals(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            char* end = nullptr;
            errno = 0;
            vals[c] = std::strtod(cells[c].c_str(), &end);
            if (end == cells[c].c_str() || *end != '\0' || errno == ERANGE)
                throw LoadFailure(file, where, "unparseable number '" + cells[c] + "'");
        }
        rows.push_back(std::move(vals));
    }
    if (rows.size() != grid.size())
        throw LoadFailure(file, "rows", "has " + std::to_string(rows.size()) + " rows but the grid has " +
                                            std::to_string(grid.size()) + " points");
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double t = rows[r][0];
        const double tg = grid.points[r];
        if (std::abs(t - tg) > 1e-12 * std::max(1.0, std::abs(tg)))
            throw LoadFailure(file, "row " + std::to_string(r + 1), "time does not match the manifest grid");
        for (std::size_t c = 0; c < p; ++c)
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c + 1];
    }
    return M;
}

} // namespace store_detail

/// Writes the basis to `dir` (created if needed). `model_info` is stored verbatim
/// under the "model" key when not null.
inline void save_store(const BasisSet& basis, const std::filesystem::path& dir,
                       const nlohmann::json& model_info = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = store_format_version;
    manifest["state_dim"] = basis.state_dim;
    manifest["param_dim"] = basis.param_dim;
    manifest["grid"] = {{"t_points", basis.grid.points}, {"sq_weights", basis.grid.sq_weights}};
    manifest["snapshots"] = nlohmann::json::array();
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const auto& sn = basis.snapshots[j];
        char stem[32];
        std::snprintf(stem, sizeof stem, "snap_%04zu", j);
        const std::string state_file = std::string(stem) + "_state.csv";
        const std::string forcing_file = std::string(stem) + "_forcing.csv";
        store_detail::write_matrix_csv(dir / state_file, basis.grid, sn.states);
        store_detail::write_matrix_csv(dir / forcing_file, basis.grid, sn.forcing);
        std::vector<double> s(sn.param.data(), sn.param.data() + sn.param.size());
        manifest["snapshots"].push_back(
            {{"id", j}, {"s", s}, {"state_file", state_file}, {"forcing_file", forcing_file}});
    }
    if (!model_info.is_null()) manifest["model"] = model_info;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw IoFailure("failed writing " + (dir / "manifest.json").string());
}

/// Reads the manifest only (throws LoadFailure on problems).
inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw LoadFailure(path.string(), "manifest", "missing or unreadable");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw LoadFailure(path.string(), "manifest", std::string("malformed JSON: ") + e.what());
    }
}

inline BasisSet load_store(const std::filesystem::path& dir) {
    const auto manifest = read_manifest(dir);
    const std::string mfile = (dir / "manifest.json").string();
    auto need = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
        if (!obj.is_object() || !obj.contains(key)) throw LoadFailure(mfile, key, "missing");
        return obj.at(key);
    };

    std::size_t p = 0, d = 0;
    TimeGrid grid;
    try {
        if (need(manifest, "version").get<int>() != store_format_version)
            throw LoadFailure(mfile, "version", "unsupported store version");
        p = need(manifest, "state_dim").get<std::size_t>();
        d = need(manifest, "param_dim").get<std::size_t>();
        const auto& g = need(manifest, "grid");
        grid.points = need(g, "t_points").get<std::vector<double>>();
        grid.sq_weights = need(g, "sq_weights").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadFailure(mfile, "header", std::string("wrong type: ") + e.what());
    }
    if (p == 0) throw LoadFailure(mfile, "state_dim", "must be positive");
    if (d == 0) throw LoadFailure(mfile, "param_dim", "must be positive");
    try {
        grid.validate();
    } catch (const InvalidArgument& e) {
        throw LoadFailure(mfile, "grid", e.what());
    }

    const auto& list = need(manifest, "snapshots");
    if (!list.is_array() || list.empty()) throw LoadFailure(mfile, "snapshots", "must be a nonempty array");
    std::vector<Snapshot> snaps;
    for (std::size_t j = 0; j < list.size(); ++j) {
        const auto& entry = list[j];
        const std::string where = "snapshots[" + std::to_string(j) + "]";
        Snapshot sn;
        std::string state_file, forcing_file;
        try {
            const auto s = need(entry, "s").get<std::vector<double>>();
            if (s.size() != d) throw LoadFailure(mfile, where + ".s", "length differs from param_dim");
            sn.param = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
            state_file = need(entry, "state_file").get<std::string>();
            forcing_file = need(entry, "forcing_file").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw LoadFailure(mfile, where, std::string("wrong type: ") + e.what());
        }
        sn.grid = grid;
        sn.states = store_detail::read_matrix_csv(dir / state_file, grid, p);
        sn.forcing = store_detail::read_matrix_csv(dir / forcing_file, grid, p);
        snaps.push_back(std::move(sn));
    }
    return assemble_basis(std::move(snaps));
}

} // namespace resmin
