#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rlhflab/errors.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

// One named slice of a flat parameter array.
struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

// Flat array of doubles with a named-segment layout. Segments are contiguous,
// non-overlapping, and cover the array exactly.
class ParamVector {
public:
    ParamVector() = default;

    std::size_t add_segment(const std::string& name, std::vector<std::size_t> shape) {
        if (index_.count(name)) throw ConfigError("duplicate segment name: " + name);
        Segment seg{name, values_.size(), std::move(shape)};
        values_.resize(values_.size() + seg.size(), 0.0);
        index_[name] = segments_.size();
        segments_.push_back(std::move(seg));
        return segments_.size() - 1;
    }

    std::size_t size() const { return values_.size(); }
    const std::vector<Segment>& segments() const { return segments_; }

    bool has_segment(const std::string& name) const { return index_.count(name) != 0; }

    const Segment& segment(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown segment: " + name);
        return segments_[it->second];
    }

    std::span<double> view(const std::string& name) {
        const Segment& s = segment(name);
        return {values_.data() + s.offset, s.size()};
    }
    std::span<const double> view(const std::string& name) const {
        const Segment& s = segment(name);
        return {values_.data() + s.offset, s.size()};
    }

    std::span<double> flat() { return {values_.data(), values_.size()}; }
    std::span<const double> flat() const { return {values_.data(), values_.size()}; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    // Same layout, all zeros.
    ParamVector zeros_like() const {
        ParamVector z;
        z.segments_ = segments_;
        z.index_ = index_;
        z.values_.assign(values_.size(), 0.0);
        return z;
    }

    bool same_layout(const ParamVector& other) const {
        if (segments_.size() != other.segments_.size()) return false;
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            if (segments_[i].name != other.segments_[i].name) return false;
            if (segments_[i].offset != other.segments_[i].offset) return false;
            if (segments_[i].shape != other.segments_[i].shape) return false;
        }
        return true;
    }

    void check_same_layout(const ParamVector& other, const char* what) const {
        if (!same_layout(other)) throw ConfigError(std::string(what) + ": parameter layout mismatch");
    }

    // this += alpha * other
    void axpy(double alpha, const ParamVector& other) {
        check_same_layout(other, "axpy");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += alpha * other.values_[i];
    }

    void scale(double alpha) {
        for (double& v : values_) v *= alpha;
    }

    void fill(double v) {
        for (double& x : values_) x = v;
    }

    double l2_norm() const {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return std::sqrt(s);
    }

    // Index of the first non-finite entry, or npos.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t first_nonfinite() const {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) return i;
        }
        return npos;
    }
    bool all_finite() const { return first_nonfinite() == npos; }

    // Name of the segment containing flat index i (for diagnostics).
    std::string segment_of(std::size_t i) const {
        for (const Segment& s : segments_) {
            if (i >= s.offset && i < s.offset + s.size()) return s.name;
        }
        return "<out of range>";
    }

    // Bit-exact content hash (FNV-1a over the raw bytes).
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (double v : values_) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffULL;
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    bool operator==(const ParamVector& other) const {
        return same_layout(other) && values_ == other.values_;
    }

private:
    std::vector<double> values_;
    std::vector<Segment> segments_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Fill a segment with N(0, 1/fan_in) entries from a keyed stream; biases stay zero
// when fan_in is passed as 0 (callers use gain/fan_in conventions per layer).
inline void init_gaussian(std::span<double> dst, RngStream& rng, double stddev) {
    for (double& v : dst) v = stddev * rng.gaussian();
}

}  // namespace rlhflab
