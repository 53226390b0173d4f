/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/data_ingest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>

#include "patchgrade/error.hpp"
#include "patchgrade/rng.hpp"

namespace patchgrade {

static_assert(std::endian::native == std::endian::little, "artifact format assumes little-endian hosts");

void GradedImage::validate() const {
    if (pixels.channels != 1 || pixels.height <= 0 || pixels.width <= 0 || pixels.empty()) {
        throw ValidationError("image '" + id + "' must be a non-empty single-channel plane");
    }
    for (float v : pixels.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ValidationError("image '" + id + "' has intensities outside [0,1]");
        }
    }
    if (grade && (*grade < 0 || *grade > kMaxGrade)) {
        throw ValidationError("image '" + id + "' has grade " + std::to_string(*grade) + " outside 0..4");
    }
}

void DatasetSplit::validate() const {
    std::unordered_map<std::string, const char*> owner;
    auto claim = [&](const std::vector<GradedImage>& part, const char* name) {
        for (const auto& img : part) {
            auto [it, inserted] = owner.emplace(img.id, name);
            if (!inserted) {
                throw ValidationError("id '" + img.id + "' appears in both " + it->second + " and " + name);
            }
        }
    };
    claim(normals, "normals");
    claim(unlabeled, "unlabeled");
    claim(test, "test");
    for (const auto& img : normals) {
        if (img.grade && *img.grade != 0) {
            throw ValidationError("normal image '" + img.id + "' has nonzero grade");
        }
    }
}

// --- split spec ------------------------------------------------------------

SplitSpec SplitSpec::from_json(const nlohmann::json& j) {
    SplitSpec s;
    if (j.contains("normal_ids")) s.normal_ids = j.at("normal_ids").get<std::vector<std::string>>();
    if (j.contains("normal_seed")) s.normal_seed = j.at("normal_seed").get<std::uint64_t>();
    if (j.contains("normal_count")) s.normal_count = j.at("normal_count").get<int>();
    if (j.contains("test_ids")) s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    if (j.contains("unlabeled_ids")) s.unlabeled_ids = j.at("unlabeled_ids").get<std::vector<std::string>>();
    if (s.normal_ids.empty() && !s.normal_count) {
        throw ValidationError("split spec needs either normal_ids or normal_count");
    }
    if (!s.normal_ids.empty() && s.normal_count) {
        throw ValidationError("split spec must not set both normal_ids and normal_count");
    }
    if (s.normal_count && *s.normal_count < 1) {
        throw ValidationError("normal_count must be positive");
    }
    return s;
}

nlohmann::json SplitSpec::to_json() const {
    nlohmann::json j;
    if (!normal_ids.empty()) j["normal_ids"] = normal_ids;
    if (normal_seed) j["normal_seed"] = *normal_seed;
    if (normal_count) j["normal_count"] = *normal_count;
    j["test_ids"] = test_ids;
    j["unlabeled_ids"] = unlabeled_ids;
    return j;
}

SplitSpec SplitSpec::read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open split spec " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed split spec " + path.string() + ": " + e.what());
    }
}

void SplitSpec::write(const fs::path& path) const { write_text_file(path, to_json().dump(1) + "\n"); }

// --- preprocess spec -------------------------------------------------------

void PreprocessSpec::validate() const {
    if (target_side <= 0) throw ValidationError("preprocess.target_side must be positive");
    for (float s : stddev) {
        if (!(s > 0.0f)) throw ValidationError("preprocess.stddev components must be positive");
    }
}

PreprocessSpec PreprocessSpec::identity(int side) {
    PreprocessSpec s;
    s.target_side = side;
    s.mean = {0.0f, 0.0f, 0.0f};
    s.stddev = {1.0f, 1.0f, 1.0f};
    return s;
}

void to_json(nlohmann::json& j, const PreprocessSpec& s) {
    j = {{"target_side", s.target_side},
         {"replicate_channels", s.replicate_channels},
         {"mean", s.mean},
         {"stddev", s.stddev}};
}

void from_json(const nlohmann::json& j, PreprocessSpec& s) {
    PreprocessSpec d;
    s.target_side = j.value("target_side", d.target_side);
    s.replicate_channels = j.value("replicate_channels", d.replicate_channels);
    s.mean = j.value("mean", d.mean);
    s.stddev = j.value("stddev", d.stddev);
}

// --- labels / images -------------------------------------------------------

namespace {

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::vector<LabelRow> read_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open labels table " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "id,grade") {
        throw ValidationError("labels table " + path.string() + " must start with header 'id,grade'");
    }
    std::vector<LabelRow> rows;
    std::unordered_set<std::string> seen;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != 2) {
            throw ValidationError("labels line " + std::to_string(lineno) + ": expected 2 fields");
        }
        LabelRow row{cells[0], std::nullopt};
        if (!cells[1].empty()) {
            try {
                std::size_t used = 0;
                row.grade = std::stoi(cells[1], &used);
                if (used != cells[1].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ValidationError("labels line " + std::to_string(lineno) + ": bad grade '" + cells[1] + "'");
            }
            if (*row.grade < 0 || *row.grade > kMaxGrade) {
                throw ValidationError("labels line " + std::to_string(lineno) + ": grade outside 0..4");
            }
        }
        if (!seen.insert(row.id).second) throw ValidationError("duplicate id '" + row.id + "' in labels table");
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_labels(const fs::path& path, const std::vector<LabelRow>& rows) {
    std::string out = "id,grade\n";
    for (const auto& r : rows) {
        out += r.id + "," + (r.grade ? std::to_string(*r.grade) : std::string()) + "\n";
    }
    write_text_file(path, out);
}

Tensor3 read_png_gray(const fs::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw LoadError("cannot read image " + path.string());
    Tensor3 t(1, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) t.at(0, y, x) = static_cast<float>(row[x]) / 255.0f;
    }
    return t;
}

void write_png_gray(const fs::path& path, const Tensor3& plane) {
    cv::Mat m(plane.height, plane.width, CV_8UC1);
    for (int y = 0; y < plane.height; ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < plane.width; ++x) {
            const float v = std::clamp(plane.at(0, y, x), 0.0f, 1.0f);
            row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    if (!cv::imwrite(path.string(), m)) throw IoError("cannot write image " + path.string());
}

// --- dataset loading -------------------------------------------------------

namespace {

std::unordered_map<std::string, bool> read_confounder_flags(const fs::path& meta) {
    std::unordered_map<std::string, bool> flags;
    std::ifstream in(meta);
    if (!in) return flags;
    std::string line;
    if (!std::getline(in, line)) return flags;
    auto header = split_csv(line);
    auto id_col = std::find(header.begin(), header.end(), "id") - header.begin();
    auto flag_col = std::find(header.begin(), header.end(), "confounder") - header.begin();
    if (id_col >= static_cast<long>(header.size()) || flag_col >= static_cast<long>(header.size())) return flags;
    while (std::getline(in, line)) {
        auto cells = split_csv(line);
        if (static_cast<long>(cells.size()) <= std::max(id_col, flag_col)) continue;
        flags[cells[id_col]] = cells[flag_col] == "1" || cells[flag_col] == "true";
    }
    return flags;
}

}  // namespace

DatasetSplit load_dataset(const fs::path& root, const SplitSpec& spec, std::optional<std::uint64_t> seed_override) {
    const auto labels = read_labels(root / "labels.csv");
    std::unordered_map<std::string, std::optional<int>> grade_of;
    for (const auto& r : labels) grade_of.emplace(r.id, r.grade);
    const auto confounders = read_confounder_flags(root / "meta.csv");

    auto check_unique = [](const std::vector<std::string>& ids, const char* what) {
        std::unordered_set<std::string> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) throw ValidationError(std::string("duplicate id '") + id + "' in " + what);
        }
    };
    check_unique(spec.test_ids, "test_ids");
    check_unique(spec.unlabeled_ids, "unlabeled_ids");
    check_unique(spec.normal_ids, "normal_ids");

    std::vector<std::string> normal_ids = spec.normal_ids;
    if (spec.normal_count) {
        std::set<std::string> claimed(spec.test_ids.begin(), spec.test_ids.end());
        claimed.insert(spec.unlabeled_ids.begin(), spec.unlabeled_ids.end());
        std::vector<std::string> pool;
        for (const auto& r : labels) {
            if (r.grade && *r.grade == 0 && !claimed.contains(r.id)) pool.push_back(r.id);
        }
        // Sort so membership depends only on the set of ids, not file order.
        std::sort(pool.begin(), pool.end());
        const int n = *spec.normal_count;
        if (n > static_cast<int>(pool.size())) {
            throw CapacityError("requested " + std::to_string(n) + " normals but only " +
                                std::to_string(pool.size()) + " unclaimed grade-0 images exist");
        }
        Rng rng(Rng::derive(seed_override.value_or(spec.normal_seed.value_or(0)), "normals"));
        for (int i = 0; i < n; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(n);
        std::sort(pool.begin(), pool.end());
        normal_ids = std::move(pool);
    }

    auto load_one = [&](const std::string& id) {
        auto it = grade_of.find(id);
        if (it == grade_of.end()) throw LoadError("id '" + id + "' is not listed in labels.csv");
        const fs::path file = root / "images" / (id + ".png");
        if (!fs::exists(file)) throw LoadError("missing image file for id '" + id + "': " + file.string());
        GradedImage img{id, read_png_gray(file), it->second, std::nullopt};
        if (auto c = confounders.find(id); c != confounders.end()) img.confounder = c->second;
        img.validate();
        return img;
    };
    auto load_all = [&](const std::vector<std::string>& ids) {
        std::vector<GradedImage> out;
        out.reserve(ids.size());
        for (const auto& id : ids) out.push_back(load_one(id));
        return out;
    };

    DatasetSplit split;
    split.normals = load_all(normal_ids);
    split.unlabeled = load_all(spec.unlabeled_ids);
    split.test = load_all(spec.test_ids);
    split.validate();
    return split;
}

DatasetSplit load_dataset(const fs::path& root, const fs::path& split_spec_path,
                          std::optional<std::uint64_t> seed_override) {
    return load_dataset(root, SplitSpec::read(split_spec_path), seed_override);
}

// --- preprocessing ---------------------------------------------------------

namespace {

struct Taps {
    int first = 0;
    std::vector<float> weights;
};

// Triangle filter taps mapping `in` samples onto `out` samples.
std::vector<Taps> resample_taps(int in, int out) {
    std::vector<Taps> taps(out);
    const double scale = static_cast<double>(in) / out;
    const double support = std::max(1.0, scale);
    for (int o = 0; o < out; ++o) {
        const double center = (o + 0.5) * scale;
        const int lo = std::max(0, static_cast<int>(std::floor(center - support)));
        const int hi = std::min(in - 1, static_cast<int>(std::ceil(center + support)));
        Taps& t = taps[o];
        t.first = lo;
        double sum = 0.0;
        std::vector<double> w;
        for (int i = lo; i <= hi; ++i) {
            const double d = std::abs((i + 0.5 - center) / support);
            const double v = d < 1.0 ? 1.0 - d : 0.0;
            w.push_back(v);
            sum += v;
        }
        if (sum <= 0.0) {
            // Degenerate: nearest sample.
            t.first = std::clamp(static_cast<int>(center), 0, in - 1);
            t.weights = {1.0f};
            continue;
        }
        for (double v : w) t.weights.push_back(static_cast<float>(v / sum));
    }
    return taps;
}

}  // namespace

Tensor3 resize_bilinear(const Tensor3& src, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ParameterError("resize target must be positive");
    if (src.height == out_h && src.width == out_w) return src;
    const auto tx = resample_taps(src.width, out_w);
    const auto ty = resample_taps(src.height, out_h);
    Tensor3 tmp(src.channels, src.height, out_w);
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < out_w; ++x) {
                const Taps& t = tx[x];
                float acc = 0.0f;
                for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * src.at(c, y, t.first + k);
                tmp.at(c, y, x) = acc;
            }
        }
    }
    Tensor3 dst(src.channels, out_h, out_w);
    for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            const Taps& t = ty[y];
            for (int x = 0; x < out_w; ++x) {
                float acc = 0.0f;
                for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * tmp.at(c, t.first + k, x);
                dst.at(c, y, x) = acc;
            }
        }
    }
    return dst;
}

Tensor3 resize_to_side(const GradedImage& image, int side) {
    if (image.pixels.height < kMinImageSide || image.pixels.width < kMinImageSide) {
        throw ValidationError("image '" + image.id + "' is degenerate (" + std::to_string(image.pixels.height) +
                              "x" + std::to_string(image.pixels.width) + ")");
    }
    Tensor3 out = resize_bilinear(image.pixels, side, side);
    for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

Tensor3 to_model_input(const Tensor3& plane, const PreprocessSpec& spec) {
    if (plane.channels != 1) throw ShapeError("to_model_input expects a single intensity plane");
    const int channels = spec.channels();
    Tensor3 out(channels, plane.height, plane.width);
    for (int c = 0; c < channels; ++c) {
        const float m = spec.mean[c];
        const float inv = 1.0f / spec.stddev[c];
        auto src = plane.plane(0);
        auto dst = out.plane(c);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - m) * inv;
    }
    return out;
}

Tensor3 preprocess(const GradedImage& image, const PreprocessSpec& spec) {
    spec.validate();
    image.validate();
    return to_model_input(resize_to_side(image, spec.target_side), spec);
}

// --- artifacts -------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'P', 'G', 'A', 'R'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw IncompatibleError("artifact " + path.string() + " is truncated");
    }
    return v;
}
}  // namespace

void write_artifact(const fs::path& path, const Artifact& artifact) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(kMagic, 4);
        put<std::uint32_t>(out, kArtifactFormatVersion);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(artifact.kind.size()));
        out.write(artifact.kind.data(), static_cast<std::streamsize>(artifact.kind.size()));
        const std::string header = artifact.header.dump();
        put<std::uint64_t>(out, header.size());
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        put<std::uint64_t>(out, artifact.values.size());
        out.write(reinterpret_cast<const char*>(artifact.values.data()),
                  static_cast<std::streamsize>(artifact.values.size() * sizeof(float)));
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

Artifact read_artifact(const fs::path& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open artifact " + path.string());
    char magic[4] = {};
    if (!in.read(magic, 4)) throw IncompatibleError("artifact " + path.string() + " is empty or truncated");
    if (std::memcmp(magic, kMagic, 4) != 0) throw IncompatibleError(path.string() + " is not a patchgrade artifact");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kArtifactFormatVersion) {
        throw IncompatibleError("artifact " + path.string() + " has format version " + std::to_string(version) +
                                ", this build reads version " + std::to_string(kArtifactFormatVersion));
    }
    Artifact a;
    const auto kind_len = get<std::uint32_t>(in, path);
    if (kind_len > 256) throw IncompatibleError("artifact " + path.string() + " has a corrupt kind field");
    a.kind.resize(kind_len);
    if (!in.read(a.kind.data(), kind_len)) throw IncompatibleError("artifact " + path.string() + " is truncated");
    if (a.kind != expected_kind) {
        throw IncompatibleError("artifact " + path.string() + " holds a '" + a.kind + "', expected '" +
                                expected_kind + "'");
    }
    const auto header_len = get<std::uint64_t>(in, path);
    std::string header(header_len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
        throw IncompatibleError("artifact " + path.string() + " is truncated");
    }
    try {
        a.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception&) {
        throw IncompatibleError("artifact " + path.string() + " has a corrupt header");
    }
    const auto count = get<std::uint64_t>(in, path);
    a.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(count * sizeof(float)))) {
        throw IncompatibleError("artifact " + path.string() + " is truncated");
    }
    return a;
}

void RunLayout::create() const {
    for (const auto& d : {checkpoints(), banks(), scores(), metrics()}) fs::create_directories(d);
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace patchgrade
