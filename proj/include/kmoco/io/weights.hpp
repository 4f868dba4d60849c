#pragma once

#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "kmoco/correction/corrector.hpp"
#include "kmoco/detection/detector.hpp"
#include "kmoco/io/raw.hpp"

namespace kmoco::io {

/// Weights container, little-endian:
///   "KMC1" | u32 version | u32 kind | u32 len + config text |
///   u32 count | count x (u32 len + name | 4 x u32 shape | f32 values)
inline constexpr char weights_magic[4] = {'K', 'M', 'C', '1'};
inline constexpr std::uint32_t weights_version = 1;

enum class ModelKind : std::uint32_t { corrector = 1, detector = 2 };

inline std::string_view kind_name(ModelKind k) { return k == ModelKind::corrector ? "corrector" : "detector"; }

struct WeightRecord {
    std::string name;
    nn::Shape shape;
    std::vector<float> values;
};

struct WeightsFile {
    ModelKind kind = ModelKind::corrector;
    std::string config;
    std::vector<WeightRecord> records;
};

namespace detail {

inline void put_u32(std::vector<char>& buf, std::uint32_t v) {
    v = to_le(v);
    char b[4];
    std::memcpy(b, &v, 4);
    buf.insert(buf.end(), b, b + 4);
}

inline void put_string(std::vector<char>& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
}

/// Bounds-checked cursor over a loaded file.
class Reader {
public:
    Reader(std::vector<char> bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            fail(ErrorCategory::truncated, origin_ + ": truncated at byte " + std::to_string(bytes_.size()) +
                                               ", needed " + std::to_string(pos_ + n));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return to_le(v);
    }
    float f32() {
        need(4);
        const float f = get_f32(bytes_.data() + pos_);
        pos_ += 4;
        return f;
    }
    std::string str(std::size_t limit) {
        const std::uint32_t n = u32();
        if (n > limit) fail(ErrorCategory::bad_header, origin_ + ": string length " + std::to_string(n) + " exceeds limit");
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t pos() const { return pos_; }

private:
    std::vector<char> bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

inline std::vector<char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace detail

inline void save_weights_file(const fs::path& path, const WeightsFile& w) {
    std::vector<char> buf(weights_magic, weights_magic + 4);
    detail::put_u32(buf, weights_version);
    detail::put_u32(buf, static_cast<std::uint32_t>(w.kind));
    detail::put_string(buf, w.config);
    detail::put_u32(buf, static_cast<std::uint32_t>(w.records.size()));
    for (const auto& r : w.records) {
        require(r.values.size() == r.shape.numel(), ErrorCategory::shape_mismatch, "weight record " + r.name + " has wrong size");
        detail::put_string(buf, r.name);
        for (int d : {r.shape.n, r.shape.c, r.shape.h, r.shape.w}) detail::put_u32(buf, static_cast<std::uint32_t>(d));
        for (float f : r.values) detail::put_f32(buf, f);
    }
    detail::write_file(path, buf);
}

inline WeightsFile load_weights_file(const fs::path& path) {
    const auto bytes = detail::slurp(path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), weights_magic, 4) != 0)
        fail(ErrorCategory::bad_header, path.string() + ": not a weights file (bad magic)");
    detail::Reader r(bytes, path.string());
    r.u32();
    const std::uint32_t version = r.u32();
    if (version != weights_version)
        fail(ErrorCategory::bad_header, path.string() + ": unsupported weights version " + std::to_string(version));
    WeightsFile w;
    const std::uint32_t kind = r.u32();
    if (kind != 1 && kind != 2) fail(ErrorCategory::bad_header, path.string() + ": unknown model kind " + std::to_string(kind));
    w.kind = static_cast<ModelKind>(kind);
    w.config = r.str(1 << 16);
    const std::uint32_t count = r.u32();
    // Every record occupies at least 20 bytes, which bounds `count`.
    if (std::uint64_t(count) * 20 > r.remaining())
        fail(ErrorCategory::truncated, path.string() + ": record count " + std::to_string(count) + " exceeds file size");
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightRecord rec;
        rec.name = r.str(1024);
        std::uint32_t d[4];
        for (auto& v : d) v = r.u32();
        std::uint64_t numel = 1;
        for (auto v : d) {
            if (v == 0 || v > (1u << 20)) fail(ErrorCategory::bad_header, path.string() + ": bad shape for " + rec.name);
            numel *= v;
        }
        if (numel * 4 > r.remaining())
            fail(ErrorCategory::truncated, path.string() + ": record " + rec.name + " truncated at byte " +
                                               std::to_string(r.pos() + r.remaining()));
        rec.shape = nn::Shape{int(d[0]), int(d[1]), int(d[2]), int(d[3])};
        rec.values.resize(static_cast<std::size_t>(numel));
        for (auto& f : rec.values) f = r.f32();
        w.records.push_back(std::move(rec));
    }
    if (r.remaining() != 0)
        fail(ErrorCategory::length_mismatch, path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return w;
}

template <class T>
std::vector<WeightRecord> export_params(const nn::ParamSet<T>& ps) {
    std::vector<WeightRecord> out;
    for (const auto& e : ps.entries()) {
        WeightRecord r{e.name, e.var->value.shape(), {}};
        r.values.reserve(e.var->value.size());
        for (std::size_t i = 0; i < e.var->value.size(); ++i) r.values.push_back(static_cast<float>(e.var->value[i]));
        out.push_back(std::move(r));
    }
    return out;
}

template <class T>
void import_params(nn::ParamSet<T>& ps, const std::vector<WeightRecord>& recs, const std::string& origin) {
    require(recs.size() == ps.entries().size(), ErrorCategory::shape_mismatch,
            origin + ": file has " + std::to_string(recs.size()) + " parameters, model expects " +
                std::to_string(ps.entries().size()));
    for (const auto& r : recs) {
        auto v = ps.find(r.name);
        require(v != nullptr, ErrorCategory::shape_mismatch, origin + ": unknown parameter " + r.name);
        require(v->value.shape() == r.shape, ErrorCategory::shape_mismatch,
                origin + ": parameter " + r.name + " has shape " + r.shape.str() + ", model expects " + v->value.shape().str());
        for (std::size_t i = 0; i < r.values.size(); ++i) v->value[i] = static_cast<T>(r.values[i]);
    }
}

inline std::string to_config_text(const CorrectorConfig& c) {
    std::ostringstream o;
    o << "levels=" << c.levels << "\nbase_channels=" << c.base_channels << "\nwindow_size=" << c.window_size
      << "\nheads=" << c.heads << "\nshifted_windows=" << (c.shifted_windows ? 1 : 0) << "\nattn_levels=";
    const auto lv = c.resolved_attn_levels();
    for (std::size_t i = 0; i < lv.size(); ++i) o << (i ? "," : "") << lv[i];
    o << "\n";
    return o.str();
}

inline std::string to_config_text(const DetectorConfig& c) {
    std::ostringstream o;
    o.precision(17);
    o << "levels=" << c.levels << "\nbase_channels=" << c.base_channels << "\nthreshold=" << c.threshold
      << "\nfeatures=" << feature_name(c.features) << "\n";
    return o.str();
}

inline CorrectorConfig corrector_config_from_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    const auto kv = parse_key_values(in, origin);
    CorrectorConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "levels") c.levels = int(parse_int(v, k));
        else if (k == "base_channels") c.base_channels = int(parse_int(v, k));
        else if (k == "window_size") c.window_size = int(parse_int(v, k));
        else if (k == "heads") c.heads = int(parse_int(v, k));
        else if (k == "shifted_windows") c.shifted_windows = parse_int(v, k) != 0;
        else if (k == "attn_levels") {
            c.attn_levels.clear();
            std::istringstream parts(v);
            std::string item;
            while (std::getline(parts, item, ','))
                if (!trim(item).empty()) c.attn_levels.push_back(int(parse_int(trim(item), k)));
        } else fail(ErrorCategory::config, origin + ": unknown corrector key '" + k + "'");
    }
    return c;
}

inline DetectorConfig detector_config_from_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    const auto kv = parse_key_values(in, origin);
    DetectorConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "levels") c.levels = int(parse_int(v, k));
        else if (k == "base_channels") c.base_channels = int(parse_int(v, k));
        else if (k == "threshold") c.threshold = parse_double(v, k);
        else if (k == "features") c.features = features_from_name(v);
        else fail(ErrorCategory::config, origin + ": unknown detector key '" + k + "'");
    }
    return c;
}

template <class T>
void save_corrector(const fs::path& path, const Corrector<T>& m) {
    save_weights_file(path, {ModelKind::corrector, to_config_text(m.config()), export_params(m.params())});
}

template <class T>
void save_detector(const fs::path& path, const Detector<T>& m) {
    save_weights_file(path, {ModelKind::detector, to_config_text(m.config()), export_params(m.params())});
}

inline Corrector<float> load_corrector(const fs::path& path) {
    const auto w = load_weights_file(path);
    require(w.kind == ModelKind::corrector, ErrorCategory::bad_header,
            path.string() + ": holds " + std::string(kind_name(w.kind)) + " weights, expected corrector");
    Corrector<float> m(corrector_config_from_text(w.config, path.string()));
    import_params(m.params(), w.records, path.string());
    return m;
}

inline Detector<float> load_detector(const fs::path& path) {
    const auto w = load_weights_file(path);
    require(w.kind == ModelKind::detector, ErrorCategory::bad_header,
            path.string() + ": holds " + std::string(kind_name(w.kind)) + " weights, expected detector");
    Detector<float> m(detector_config_from_text(w.config, path.string()));
    import_params(m.params(), w.records, path.string());
    return m;
}

} // namespace kmoco::io
