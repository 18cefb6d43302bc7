#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rlhflab/errors.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/reward_model.hpp"

namespace rlhflab {

// Binary checkpoint container: magic "RLCK", format version, a kind tag, a
// string metadata map (architecture dimensions live here so files are
// self-describing), one or more named parameter blocks, and a trailing CRC32
// over everything before it. Integers and doubles are little-endian.

namespace detail {

inline std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t len) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

class CkptWriter {
  public:
    void u32(std::uint32_t x) { raw(&x, sizeof x); }
    void u64(std::uint64_t x) { raw(&x, sizeof x); }
    void f64(double x) { raw(&x, sizeof x); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void raw(const void* data, std::size_t len) {
        const auto* p = static_cast<const char*>(data);
        bytes_.insert(bytes_.end(), p, p + len);
    }
    const std::vector<char>& bytes() const { return bytes_; }

  private:
    std::vector<char> bytes_;
};

class CkptReader {
  public:
    CkptReader(const char* data, std::size_t size, std::string path)
        : data_(data), size_(size), path_(std::move(path)) {}

    std::uint32_t u32() {
        std::uint32_t x;
        raw(&x, sizeof x);
        return x;
    }
    std::uint64_t u64() {
        std::uint64_t x;
        raw(&x, sizeof x);
        return x;
    }
    double f64() {
        double x;
        raw(&x, sizeof x);
        return x;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > remaining()) fail("string length exceeds file");
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }
    void raw(void* out, std::size_t len) {
        if (len > remaining()) fail("truncated file");
        std::memcpy(out, data_ + pos_, len);
        pos_ += len;
    }
    std::size_t remaining() const { return size_ - pos_; }
    std::size_t pos() const { return pos_; }
    [[noreturn]] void fail(const std::string& what) const {
        throw CheckpointError(path_ + ": " + what);
    }

  private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string path_;
};

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'R', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;  // "policy" | "enn"
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, ParamVector>> blocks;

    const ParamVector& block(const std::string& name) const {
        for (const auto& [n, p] : blocks)
            if (n == name) return p;
        throw CheckpointError("checkpoint has no block named '" + name + "'");
    }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    detail::CkptWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(ckpt.kind);
    w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(ckpt.blocks.size()));
    for (const auto& [name, params] : ckpt.blocks) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(params.segments().size()));
        for (const Segment& seg : params.segments()) {
            w.str(seg.name);
            w.u32(static_cast<std::uint32_t>(seg.shape.size()));
            for (std::size_t d : seg.shape) w.u64(d);
            const std::span<const double> vals = params.view(seg.name);
            w.raw(vals.data(), vals.size() * sizeof(double));
        }
    }
    const std::uint32_t crc = detail::crc32_update(0, w.bytes().data(), w.bytes().size());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open for writing: " + path);
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!out) throw CheckpointError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + sizeof(std::uint32_t) * 2)
        throw CheckpointError(path + ": file too small");

    const std::size_t body = bytes.size() - sizeof(std::uint32_t);
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, sizeof stored_crc);
    const std::uint32_t actual_crc = detail::crc32_update(0, bytes.data(), body);
    if (stored_crc != actual_crc) throw CheckpointError(path + ": checksum mismatch");

    detail::CkptReader r(bytes.data(), body, path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.fail("not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        r.fail("unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.kind = r.str();
    const std::uint32_t meta_count = r.u32();
    for (std::uint32_t i = 0; i < meta_count; ++i) {
        std::string k = r.str();
        ckpt.meta[k] = r.str();
    }
    const std::uint32_t block_count = r.u32();
    for (std::uint32_t bi = 0; bi < block_count; ++bi) {
        std::string name = r.str();
        ParamVector params;
        const std::uint32_t seg_count = r.u32();
        for (std::uint32_t si = 0; si < seg_count; ++si) {
            const std::string seg_name = r.str();
            const std::uint32_t ndim = r.u32();
            std::vector<std::size_t> shape(ndim);
            for (std::uint32_t d = 0; d < ndim; ++d)
                shape[d] = static_cast<std::size_t>(r.u64());
            params.add_segment(seg_name, shape);
            const std::span<double> vals = params.view(seg_name);
            r.raw(vals.data(), vals.size() * sizeof(double));
        }
        ckpt.blocks.emplace_back(std::move(name), std::move(params));
    }
    if (r.remaining() != 0) r.fail("trailing bytes after last block");
    return ckpt;
}

// ---------------------------------------------------------------------------
// Typed wrappers

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(xs[i]);
    }
    return out;
}

inline std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        out.push_back(static_cast<std::size_t>(std::stoull(s.substr(pos, next - pos))));
        pos = next + 1;
    }
    return out;
}

inline std::size_t meta_u64(const Checkpoint& c, const std::string& key) {
    const auto it = c.meta.find(key);
    if (it == c.meta.end()) throw CheckpointError("checkpoint missing meta key: " + key);
    return static_cast<std::size_t>(std::stoull(it->second));
}

inline void put_backbone_meta(std::map<std::string, std::string>& meta,
                              const BackboneSpec& bb) {
    meta["backbone.vocab_size"] = std::to_string(bb.vocab_size);
    meta["backbone.embed_dim"] = std::to_string(bb.embed_dim);
    meta["backbone.window"] = std::to_string(bb.window);
    meta["backbone.repr_dim"] = std::to_string(bb.repr_dim);
    meta["backbone.trunk"] = join_sizes(bb.trunk_widths);
}

inline BackboneSpec backbone_from_meta(const Checkpoint& c) {
    BackboneSpec bb;
    bb.vocab_size = meta_u64(c, "backbone.vocab_size");
    bb.embed_dim = meta_u64(c, "backbone.embed_dim");
    bb.window = meta_u64(c, "backbone.window");
    bb.repr_dim = meta_u64(c, "backbone.repr_dim");
    const auto it = c.meta.find("backbone.trunk");
    if (it == c.meta.end()) throw CheckpointError("checkpoint missing meta key: backbone.trunk");
    bb.trunk_widths = split_sizes(it->second);
    return bb;
}

}  // namespace detail

inline Checkpoint make_policy_checkpoint(const PolicyArch& arch, const ParamVector& params,
                                         std::map<std::string, std::string> extra = {}) {
    Checkpoint c;
    c.kind = "policy";
    c.meta = std::move(extra);
    detail::put_backbone_meta(c.meta, arch.backbone);
    c.meta["policy.max_response_len"] = std::to_string(arch.max_response_len);
    c.blocks.emplace_back("params", params);
    return c;
}

inline Checkpoint make_enn_checkpoint(const EnnRewardModel& rm,
                                      std::map<std::string, std::string> extra = {}) {
    Checkpoint c;
    c.kind = "enn";
    c.meta = std::move(extra);
    detail::put_backbone_meta(c.meta, rm.arch.backbone);
    c.meta["reward.head"] = rm.arch.head == HeadKind::Mlp ? "mlp" : "linear";
    c.meta["reward.head_hidden"] = std::to_string(rm.arch.head_hidden);
    c.meta["reward.num_index_heads"] = std::to_string(rm.arch.num_index_heads);
    c.meta["reward.prior_hidden"] = std::to_string(rm.arch.prior_hidden);
    c.meta["reward.prior_scale"] = std::to_string(rm.arch.prior_scale);
    c.blocks.emplace_back("base", rm.base);
    if (rm.arch.num_index_heads > 0) c.blocks.emplace_back("priors", rm.priors);
    for (std::size_t z = 1; z <= rm.arch.num_index_heads; ++z)
        c.blocks.emplace_back("diff." + std::to_string(z), rm.diffs[z - 1]);
    return c;
}

// Rebuilds a policy from a checkpoint; the architecture comes from metadata.
inline std::pair<PolicyArch, ParamVector> load_policy_checkpoint(const Checkpoint& c) {
    if (c.kind != "policy")
        throw CheckpointError("expected a policy checkpoint, got kind '" + c.kind + "'");
    PolicyArch arch;
    arch.backbone = detail::backbone_from_meta(c);
    arch.max_response_len = detail::meta_u64(c, "policy.max_response_len");
    const ParamVector& params = c.block("params");
    ParamVector expect = make_policy_params(arch);
    expect.check_same_layout(params, "policy checkpoint");
    return {arch, params};
}

inline EnnRewardModel load_enn_checkpoint(const Checkpoint& c) {
    if (c.kind != "enn")
        throw CheckpointError("expected an enn checkpoint, got kind '" + c.kind + "'");
    RewardArch arch;
    arch.backbone = detail::backbone_from_meta(c);
    const auto head_it = c.meta.find("reward.head");
    if (head_it == c.meta.end()) throw CheckpointError("checkpoint missing meta key: reward.head");
    arch.head = head_it->second == "mlp" ? HeadKind::Mlp : HeadKind::Linear;
    arch.head_hidden = detail::meta_u64(c, "reward.head_hidden");
    arch.num_index_heads = detail::meta_u64(c, "reward.num_index_heads");
    arch.prior_hidden = detail::meta_u64(c, "reward.prior_hidden");
    const auto scale_it = c.meta.find("reward.prior_scale");
    if (scale_it == c.meta.end())
        throw CheckpointError("checkpoint missing meta key: reward.prior_scale");
    arch.prior_scale = std::stod(scale_it->second);

    EnnRewardModel rm;
    rm.arch = arch;
    rm.base = c.block("base");
    if (arch.num_index_heads > 0) rm.priors = c.block("priors");
    for (std::size_t z = 1; z <= arch.num_index_heads; ++z)
        rm.diffs.push_back(c.block("diff." + std::to_string(z)));
    return rm;
}

}  // namespace rlhflab
