#ifndef GROUNDKIT_UTIL_HPP
#define GROUNDKIT_UTIL_HPP

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "groundkit/error.hpp"

namespace groundkit {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian layout");

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for an independent stream keyed by name, so per-item work can run in any order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
    return splitmix64(seed ^ fnv1a(key));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        auto next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.emplace_back(s.substr(pos));
            break;
        }
        out.emplace_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

inline std::string strip_punct(std::string_view s) {
    while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write to a sibling temp file, then rename over the target.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorCode::io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

template <typename T>
void put_pod(std::string& buf, const T& v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T>
T get_pod(std::string_view buf, std::size_t& pos) {
    if (pos + sizeof(T) > buf.size()) throw Error(ErrorCode::format, "unexpected end of data");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

// Round-trippable decimal form used in every report.
inline std::string format_double(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

inline unsigned default_workers() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

/*
 * Runs fn(i) for i in [0, n) on up to `workers` threads. Callers keep results
 * indexed by i and reduce in index order, so output never depends on workers.
 */
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t nthreads = std::min<std::size_t>(std::max(1u, workers), n);
    if (nthreads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

} // namespace groundkit

#endif
