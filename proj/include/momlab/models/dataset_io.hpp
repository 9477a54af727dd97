#pragma once

// Dataset persistence.
//   UV:      one CSV with columns index,x,y.
//   Sensing: a directory holding manifest.csv (index,d,r,P,y,file), one
//            row-major headerless CSV per A_i, and x_star.csv.

#include <filesystem>
#include <sstream>

#include "momlab/csv.hpp"
#include "momlab/models/matrix_sensing.hpp"
#include "momlab/models/vector_uv.hpp"

namespace momlab {

inline void write_uv_dataset(const UVDataset& ds, const std::string& path) {
    std::ostringstream out;
    out << "index,x,y\n";
    for (Index a = 0; a < ds.size(); ++a) out << a << ',' << csv::fmt(ds.x(a)) << ',' << csv::fmt(ds.y(a)) << '\n';
    csv::write_file(path, out.str());
}

inline UVDataset read_uv_dataset(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    const int cx = t.require_column("x"), cy = t.require_column("y");
    UVDataset ds;
    ds.x.resize(static_cast<Index>(t.rows.size()));
    ds.y.resize(static_cast<Index>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ds.x(static_cast<Index>(r)) = t.number(r, cx);
        ds.y(static_cast<Index>(r)) = t.number(r, cy);
    }
    return ds;
}

namespace detail {

inline std::string matrix_rows_csv(const Matrix& m) {
    std::ostringstream out;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << csv::fmt(m(i, j));
        }
        out << '\n';
    }
    return out.str();
}

inline Matrix read_matrix_rows(const std::string& path, Index d) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    Matrix m(d, d);
    std::string line;
    for (Index i = 0; i < d; ++i) {
        if (!std::getline(in, line)) throw FormatError(path + ": expected " + std::to_string(d) + " rows");
        const auto cells = csv::split(line);
        if (static_cast<Index>(cells.size()) != d) throw FormatError(path + ": row width mismatch");
        for (Index j = 0; j < d; ++j) m(i, j) = std::stod(cells[static_cast<std::size_t>(j)]);
    }
    return m;
}

}  // namespace detail

inline void write_sensing_dataset(const SensingDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ostringstream manifest;
    manifest << "index,d,r,P,y,file\n";
    for (Index i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "A_%05ld.csv", static_cast<long>(i));
        csv::write_file((fs::path(dir) / name).string(), detail::matrix_rows_csv(ds.a[i]));
        manifest << i << ',' << ds.d << ',' << ds.r << ',' << ds.size() << ',' << csv::fmt(ds.y(i)) << ',' << name
                 << '\n';
    }
    csv::write_file((fs::path(dir) / "manifest.csv").string(), manifest.str());
    csv::write_file((fs::path(dir) / "x_star.csv").string(), detail::matrix_rows_csv(ds.x_star));
}

inline SensingDataset read_sensing_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const csv::Table t = csv::read_file((fs::path(dir) / "manifest.csv").string());
    if (t.rows.empty()) throw FormatError("sensing manifest has no rows");
    const int cd = t.require_column("d"), cr = t.require_column("r"), cp = t.require_column("P");
    const int cy = t.require_column("y"), cf = t.require_column("file");
    SensingDataset ds;
    ds.d = static_cast<Index>(t.number(0, cd));
    ds.r = static_cast<Index>(t.number(0, cr));
    const auto p = static_cast<std::size_t>(t.number(0, cp));
    if (p != t.rows.size()) throw FormatError("manifest P does not match row count");
    ds.y.resize(static_cast<Index>(p));
    for (std::size_t i = 0; i < p; ++i) {
        ds.y(static_cast<Index>(i)) = t.number(i, cy);
        ds.a.push_back(detail::read_matrix_rows((fs::path(dir) / t.rows[i][static_cast<std::size_t>(cf)]).string(), ds.d));
    }
    ds.x_star = detail::read_matrix_rows((fs::path(dir) / "x_star.csv").string(), ds.d);
    return ds;
}

}  // namespace momlab
