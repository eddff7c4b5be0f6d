#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace corelnet {

using Shape = std::vector<int>;

inline long numel(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void fmt_parts(std::ostringstream&) {}
template <typename A, typename... Rest>
void fmt_parts(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    fmt_parts(os, rest...);
}
}  // namespace detail

template <typename... A>
[[noreturn]] void fail(const A&... parts) {
    std::ostringstream os;
    detail::fmt_parts(os, parts...);
    throw Error(os.str());
}

template <typename... A>
void require(bool cond, const A&... parts) {
    if (!cond) fail(parts...);
}

// Dense n-d buffer. Row-major, shape extents are positive.
template <typename T>
struct Array {
    Shape shape;
    std::vector<T> v;

    Array() = default;
    explicit Array(Shape s) : shape(std::move(s)), v(numel(shape), T(0)) {}
    Array(Shape s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
        require(static_cast<long>(v.size()) == numel(shape), "array data size ", v.size(),
                " does not match shape ", shape_str(shape));
    }

    long size() const { return static_cast<long>(v.size()); }
    bool empty() const { return v.empty(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T& operator[](long i) { return v[i]; }
    const T& operator[](long i) const { return v[i]; }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename U>
    Array<U> cast() const {
        Array<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

// Counter-based deterministic RNG. Every consumer derives an independent
// stream from (seed, tag...) so episode generation stays a pure function of
// its identifiers regardless of call order.
inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0xD1B54A32D192ED03ull)) {}

    static Rng from(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
        uint64_t s = mix64(seed);
        s = mix64(s ^ mix64(a + 0x100));
        s = mix64(s ^ mix64(b + 0x200));
        s = mix64(s ^ mix64(c + 0x300));
        return Rng(s);
    }

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    long randint(long n) {
        if (n <= 0) fail("randint bound must be positive, got ", n);
        return static_cast<long>(static_cast<unsigned __int128>(next()) *
                                 static_cast<unsigned __int128>(n) >> 64);
    }

    bool coin() { return (next() & 1u) != 0; }

    template <typename V>
    void shuffle(V& v) {
        for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
            long j = randint(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // k distinct values from [0, n)
    std::vector<int> sample_distinct(int n, int k) {
        require(k <= n, "cannot sample ", k, " distinct values from ", n);
        std::vector<int> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < k; ++i) {
            long j = i + randint(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    uint64_t state_;
};

// FNV-1a over raw bytes; used for parameter checksums.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

template <typename T>
uint64_t checksum(const Array<T>& a, uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a(a.v.data(), a.v.size() * sizeof(T), h);
}

}  // namespace corelnet
