#pragma once

// Deterministic parallel map over independent cells. Each cell gets its own
// RandomStream keyed by (seed, hash of its coordinates); results come back in
// cell order no matter how the work was scheduled.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "momlab/csv.hpp"
#include "momlab/numerics.hpp"

namespace momlab {

/// Canonical coordinate string of a cell, e.g. "uv|gamma=0.5|eta=0.001".
struct CellKey {
    std::string experiment;
    std::vector<std::pair<std::string, std::string>> coords;

    CellKey& add(const std::string& name, double value) {
        coords.emplace_back(name, csv::fmt(value));
        return *this;
    }
    CellKey& add(const std::string& name, const std::string& value) {
        coords.emplace_back(name, value);
        return *this;
    }
    std::string str() const {
        std::string s = experiment;
        for (const auto& [k, v] : coords) s += "|" + k + "=" + v;
        return s;
    }
    std::uint64_t stream_index() const { return stable_hash(str()); }
};

inline RandomStream cell_stream(std::uint64_t seed, const CellKey& key) { return RandomStream(seed, key.stream_index()); }

/// Runs fn(i) for i in [0, count) on `parallelism` threads. Results are stored
/// by index. The first exception escaping fn is rethrown after all workers stop.
template <class Result>
std::vector<Result> parallel_map(std::size_t count, int parallelism, const std::function<Result(std::size_t)>& fn) {
    if (parallelism < 1) throw ContractViolation("parallelism must be >= 1");
    std::vector<Result> out(count);
    if (count == 0) return out;
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(parallelism), count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        while (!abort.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                abort = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

/// Header plus rows, written with a single writer. Rows are sorted so the file
/// depends only on the set of results.
struct CsvSheet {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string render(bool sort_rows = true) const {
        std::vector<std::string> lines;
        lines.reserve(rows.size());
        for (const auto& r : rows) {
            if (r.size() != header.size()) throw ContractViolation("CSV row width does not match header");
            lines.push_back(csv::join(r));
        }
        if (sort_rows) std::sort(lines.begin(), lines.end());
        std::string s = csv::join(header) + "\n";
        for (const std::string& l : lines) s += l + "\n";
        return s;
    }
    void write(const std::string& path, bool sort_rows = true) const { csv::write_file(path, render(sort_rows)); }
};

}  // namespace momlab
