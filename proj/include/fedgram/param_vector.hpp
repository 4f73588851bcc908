#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "fedgram/error.hpp"
#include "fedgram/mathcore.hpp"

namespace fedgram {

enum class LayerRole : std::uint8_t { representation = 0, decision = 1 };

struct Segment {
    std::size_t start = 0;
    std::size_t length = 0;
    LayerRole role = LayerRole::representation;

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Flat model parameters plus the layer map that says which slices belong to
/// the representation stack and which to the decision layer.
///
/// Segments tile [0, size) in order, and every representation segment comes
/// before every decision segment.
class ParamVector {
public:
    ParamVector() = default;

    ParamVector(Vec values, std::vector<Segment> segments)
        : values_(std::move(values)), segments_(std::move(segments)) {
        validate();
    }

    /// A single representation segment covering everything. Handy for tests
    /// and for aggregators fed raw vectors.
    static ParamVector flat(Vec values) {
        const auto n = values.size();
        return ParamVector(std::move(values), {Segment{0, n, LayerRole::representation}});
    }

    std::size_t size() const { return values_.size(); }
    const Vec& values() const { return values_; }
    Vec& values() { return values_; }
    const std::vector<Segment>& segments() const { return segments_; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    /// Same layout, new values.
    ParamVector with_values(Vec values) const {
        require(values.size() == values_.size(), "dimension mismatch");
        ParamVector out;
        out.values_ = std::move(values);
        out.segments_ = segments_;
        return out;
    }

    bool same_layout(const ParamVector& other) const { return segments_ == other.segments_; }

    /// Index range [begin, end) covered by decision-role segments.
    std::pair<std::size_t, std::size_t> decision_range() const {
        for (const auto& s : segments_) {
            if (s.role == LayerRole::decision) {
                return {s.start, values_.size()};
            }
        }
        return {values_.size(), values_.size()};
    }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

    // -- serialization ------------------------------------------------------
    //
    // Layout, all integers and floats little-endian:
    //   u64 segment_count
    //   segment_count * { u64 start, u64 length, u8 role }
    //   u64 value_count
    //   value_count * f64

    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> out;
        out.reserve(16 + segments_.size() * 17 + values_.size() * 8);
        put_u64(out, segments_.size());
        for (const auto& s : segments_) {
            put_u64(out, s.start);
            put_u64(out, s.length);
            out.push_back(static_cast<std::uint8_t>(s.role));
        }
        put_u64(out, values_.size());
        for (double v : values_) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
        return out;
    }

    static ParamVector from_bytes(std::span<const std::uint8_t> bytes) {
        std::size_t pos = 0;
        const auto nseg = get_u64(bytes, pos);
        require(nseg <= bytes.size(), "corrupt parameter file: segment count");
        std::vector<Segment> segments;
        segments.reserve(nseg);
        for (std::uint64_t i = 0; i < nseg; ++i) {
            Segment s;
            s.start = get_u64(bytes, pos);
            s.length = get_u64(bytes, pos);
            require(pos < bytes.size(), "corrupt parameter file: truncated segment");
            const auto role = bytes[pos++];
            require(role <= 1, "corrupt parameter file: unknown layer role");
            s.role = static_cast<LayerRole>(role);
            segments.push_back(s);
        }
        const auto nval = get_u64(bytes, pos);
        require(bytes.size() - pos == nval * 8, "corrupt parameter file: value count");
        Vec values(nval);
        for (auto& v : values) {
            v = std::bit_cast<double>(get_u64(bytes, pos));
        }
        return ParamVector(std::move(values), std::move(segments));
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        require(static_cast<bool>(f), "cannot open " + path + " for writing");
        const auto bytes = to_bytes();
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        require(static_cast<bool>(f), "write failed: " + path);
    }

    static ParamVector load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        require(static_cast<bool>(f), "cannot open " + path);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        return from_bytes(bytes);
    }

private:
    void validate() const {
        std::size_t cursor = 0;
        bool seen_decision = false;
        for (const auto& s : segments_) {
            require(s.start == cursor, "segments must tile the parameter vector in order");
            if (s.role == LayerRole::decision) {
                seen_decision = true;
            } else {
                require(!seen_decision, "representation segment after decision segment");
            }
            cursor += s.length;
        }
        require(cursor == values_.size(), "segments do not cover the parameter vector");
    }

    static void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    static std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t& pos) {
        require(pos + 8 <= bytes.size(), "corrupt parameter file: truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }

    Vec values_;
    std::vector<Segment> segments_;
};

/// Model vectors of a set of parameter vectors, for the Vec-based kernels.
inline std::vector<Vec> values_of(std::span<const ParamVector> params) {
    std::vector<Vec> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.push_back(p.values());
    }
    return out;
}

}  // namespace fedgram
