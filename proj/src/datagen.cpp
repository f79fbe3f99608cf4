#include "issm/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "issm/errors.hpp"
#include "issm/rng.hpp"

namespace issm {

void SyntheticSpec::validate() const {
    if (class_count < 1 || samples_per_class < 1 || joints < 1 || dims < 1 || frames < 1) {
        throw ConfigError("synthetic spec counts must all be >= 1");
    }
    if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
        throw ConfigError("class_separation must be >= 0");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
}

std::vector<SkeletonSequence> generate(const SyntheticSpec& spec) {
    spec.validate();
    const int width = spec.joints * spec.dims;
    std::vector<SkeletonSequence> out;
    out.reserve(static_cast<std::size_t>(spec.class_count) * static_cast<std::size_t>(spec.samples_per_class));
    for (int c = 0; c < spec.class_count; ++c) {
        Rng template_rng(derive_seed(spec.seed, "class_template", static_cast<std::uint64_t>(c)));
        std::uniform_real_distribution<double> freq(0.5, 2.0);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        std::uniform_real_distribution<double> amp(0.5, 1.5);
        std::vector<double> f(static_cast<std::size_t>(width)), ph(f.size()), a(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] = freq(template_rng);
            ph[i] = phase(template_rng);
            a[i] = spec.class_separation * amp(template_rng);
        }
        std::vector<double> base(static_cast<std::size_t>(spec.frames * width));
        for (int t = 0; t < spec.frames; ++t) {
            const double tau = static_cast<double>(t) / static_cast<double>(spec.frames);
            for (std::size_t i = 0; i < f.size(); ++i) {
                base[static_cast<std::size_t>(t * width) + i] = a[i] * std::sin(2.0 * std::numbers::pi * f[i] * tau + ph[i]);
            }
        }
        for (int s = 0; s < spec.samples_per_class; ++s) {
            const auto index = static_cast<std::uint64_t>(c) * static_cast<std::uint64_t>(spec.samples_per_class) +
                               static_cast<std::uint64_t>(s);
            Rng jitter_rng(derive_seed(spec.seed, "sample_jitter", index));
            std::normal_distribution<double> jitter(0.0, 1.0);
            std::vector<double> coords = base;
            if (spec.noise_sigma > 0.0) {
                for (double& v : coords) v += spec.noise_sigma * jitter(jitter_rng);
            }
            out.emplace_back(spec.frames, spec.joints, spec.dims, std::move(coords), c);
        }
    }
    return out;
}

Dataset::Dataset(std::vector<Sample> samples, InputKind kind) : samples_(std::move(samples)), kind_(kind) {
    if (samples_.empty()) throw InsufficientDataError("dataset is empty");
    input_dim_ = samples_.front().input.size();
    if (input_dim_ < 1) throw ShapeError("dataset samples need at least one feature");
    int max_label = -1;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const Sample& s = samples_[i];
        if (s.id < 0) throw IntegrityError("negative sample id " + std::to_string(s.id));
        if (!index_.emplace(s.id, i).second) throw IntegrityError("duplicate sample id " + std::to_string(s.id));
        if (s.input.size() != input_dim_) throw ShapeError("sample " + std::to_string(s.id) + " has a different feature width");
        if (!s.input.allFinite()) throw InvalidInputError("sample " + std::to_string(s.id) + " has non-finite features");
        if (s.label) {
            if (*s.label < 0) throw InvalidInputError("negative label on sample " + std::to_string(s.id));
            max_label = std::max(max_label, *s.label);
        }
    }
    class_count_ = max_label + 1;
}

Dataset Dataset::from_sequences(const std::vector<SkeletonSequence>& seqs) {
    std::vector<Sample> samples;
    samples.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        samples.push_back(Sample{static_cast<SampleId>(i), seqs[i].label(), pool_features(seqs[i])});
    }
    return Dataset(std::move(samples), InputKind::pooled_sequences);
}

const Sample& Dataset::at(SampleId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw InvalidInputError("unknown sample id " + std::to_string(id));
    return samples_[it->second];
}

IdList Dataset::ids() const {
    IdList out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.id);
    std::sort(out.begin(), out.end());
    return out;
}

Matrix Dataset::inputs(const IdList& ids) const {
    Matrix out(static_cast<Eigen::Index>(ids.size()), input_dim_);
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = at(ids[i]).input.transpose();
    return out;
}

std::vector<int> Dataset::labels(const IdList& ids) const {
    std::vector<int> out;
    out.reserve(ids.size());
    for (SampleId id : ids) {
        const Sample& s = at(id);
        if (!s.label) throw InvalidInputError("sample " + std::to_string(id) + " has no label");
        out.push_back(*s.label);
    }
    return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
    if (a.kind_ != b.kind_ || a.samples_.size() != b.samples_.size()) return false;
    for (std::size_t i = 0; i < a.samples_.size(); ++i) {
        const Sample& x = a.samples_[i];
        const Sample& y = b.samples_[i];
        if (x.id != y.id || x.label != y.label || x.input.size() != y.input.size() || x.input != y.input) return false;
    }
    return true;
}

FeatureFormat feature_format_from_string(const std::string& s) {
    if (s == "csv") return FeatureFormat::csv;
    if (s == "jsonl") return FeatureFormat::jsonl;
    throw ConfigError("unknown feature file format '" + s + "' (expected csv or jsonl)");
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return s.substr(i);
}

template <typename T>
T parse_number(const std::string& text, std::size_t line, const char* what) {
    T value{};
    const auto t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
        throw ParseError(std::string("cannot parse ") + what + " '" + t + "'", line);
    }
    return value;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FilesystemError("cannot open for reading", path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FilesystemError("cannot open for writing", path.string());
    return out;
}

Dataset load_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty feature file", 1);
    const auto header = split_commas(trim(line));
    if (header.size() < 3 || trim(header[0]) != "id" || trim(header[1]) != "label") {
        throw ParseError("header must be id,label,f0,...", 1);
    }
    const std::size_t m = header.size() - 2;
    for (std::size_t k = 0; k < m; ++k) {
        if (trim(header[k + 2]) != "f" + std::to_string(k)) throw ParseError("feature columns must be f0..f{m-1}", 1);
    }
    std::vector<Sample> samples;
    std::set<SampleId> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(trim(line));
        if (cells.size() != m + 2) {
            throw ParseError("expected " + std::to_string(m + 2) + " columns, found " + std::to_string(cells.size()),
                             lineno);
        }
        Sample s;
        s.id = parse_number<SampleId>(cells[0], lineno, "id");
        if (!seen.insert(s.id).second) throw IntegrityError("duplicate sample id " + std::to_string(s.id) + " (line " + std::to_string(lineno) + ")");
        if (!trim(cells[1]).empty()) s.label = parse_number<int>(cells[1], lineno, "label");
        s.input.resize(static_cast<Eigen::Index>(m));
        for (std::size_t k = 0; k < m; ++k) {
            const double v = parse_number<double>(cells[k + 2], lineno, "feature");
            if (!std::isfinite(v)) throw ParseError("non-finite feature value in column f" + std::to_string(k), lineno);
            s.input[static_cast<Eigen::Index>(k)] = v;
        }
        samples.push_back(std::move(s));
    }
    return Dataset(std::move(samples), InputKind::precomputed);
}

Dataset load_jsonl(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<Sample> samples;
    std::set<SampleId> seen;
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> width;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        try {
            Sample s;
            s.id = j.at("id").get<SampleId>();
            if (!seen.insert(s.id).second) throw IntegrityError("duplicate sample id " + std::to_string(s.id) + " (line " + std::to_string(lineno) + ")");
            if (j.contains("label") && !j.at("label").is_null()) s.label = j.at("label").get<int>();
            const auto f = j.at("features").get<std::vector<double>>();
            if (width && f.size() != *width) throw ParseError("ragged feature vector", lineno);
            width = f.size();
            if (f.empty()) throw ParseError("empty feature vector", lineno);
            for (double v : f) {
                if (!std::isfinite(v)) throw ParseError("non-finite feature value", lineno);
            }
            s.input = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
            samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), lineno);
        }
    }
    return Dataset(std::move(samples), InputKind::precomputed);
}

}  // namespace

Dataset load_feature_file(const std::filesystem::path& path, FeatureFormat format) {
    return format == FeatureFormat::csv ? load_csv(path) : load_jsonl(path);
}

void write_feature_file(const Dataset& ds, const std::filesystem::path& path, FeatureFormat format) {
    auto out = open_out(path);
    if (format == FeatureFormat::csv) {
        out << "id,label";
        for (Eigen::Index k = 0; k < ds.input_dim(); ++k) out << ",f" << k;
        out << '\n';
        for (const Sample& s : ds.samples()) {
            out << s.id << ',';
            if (s.label) out << *s.label;
            for (Eigen::Index k = 0; k < s.input.size(); ++k) out << ',' << format_double(s.input[k]);
            out << '\n';
        }
    } else {
        for (const Sample& s : ds.samples()) {
            nlohmann::json j;
            j["id"] = s.id;
            j["label"] = s.label ? nlohmann::json(*s.label) : nlohmann::json(nullptr);
            j["features"] = std::vector<double>(s.input.data(), s.input.data() + s.input.size());
            out << j.dump() << '\n';
        }
    }
    if (!out) throw FilesystemError("write failed", path.string());
}

std::vector<SkeletonSequence> load_sequence_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<SkeletonSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto frames = j.at("frames").get<std::vector<std::vector<std::vector<double>>>>();
            if (frames.empty() || frames[0].empty() || frames[0][0].empty()) throw ParseError("empty frames array", lineno);
            const auto p = frames[0].size();
            const auto d = frames[0][0].size();
            std::vector<double> coords;
            for (const auto& fr : frames) {
                if (fr.size() != p) throw ParseError("ragged joint count", lineno);
                for (const auto& joint : fr) {
                    if (joint.size() != d) throw ParseError("ragged coordinate count", lineno);
                    coords.insert(coords.end(), joint.begin(), joint.end());
                }
            }
            std::optional<int> label;
            if (j.contains("label") && !j.at("label").is_null()) label = j.at("label").get<int>();
            out.emplace_back(static_cast<int>(frames.size()), static_cast<int>(p), static_cast<int>(d),
                             std::move(coords), label);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed sequence record: ") + e.what(), lineno);
        } catch (const InvalidInputError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return out;
}

void write_sequence_file(const std::vector<SkeletonSequence>& seqs, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& s = seqs[i];
        nlohmann::json frames = nlohmann::json::array();
        for (int t = 0; t < s.frames(); ++t) {
            nlohmann::json fr = nlohmann::json::array();
            for (int jn = 0; jn < s.joints(); ++jn) {
                nlohmann::json joint = nlohmann::json::array();
                for (int k = 0; k < s.dims(); ++k) joint.push_back(s.at(t, jn, k));
                fr.push_back(std::move(joint));
            }
            frames.push_back(std::move(fr));
        }
        nlohmann::json j;
        j["id"] = i;
        j["label"] = s.label() ? nlohmann::json(*s.label()) : nlohmann::json(nullptr);
        j["frames"] = std::move(frames);
        out << j.dump() << '\n';
    }
    if (!out) throw FilesystemError("write failed", path.string());
}

std::pair<IdList, IdList> stratified_take(const Dataset& ds, const IdList& universe, std::size_t n,
                                          std::uint64_t seed) {
    std::map<int, IdList> by_class;
    std::size_t labeled_total = 0;
    for (SampleId id : universe) {
        const auto& label = ds.at(id).label;
        if (label) {
            by_class[*label].push_back(id);
            ++labeled_total;
        }
    }
    if (n > labeled_total) {
        throw InsufficientDataError("requested " + std::to_string(n) + " labeled samples but only " +
                                    std::to_string(labeled_total) + " are available");
    }
    Rng rng(seed);
    for (auto& [cls, ids] : by_class) {
        std::sort(ids.begin(), ids.end());
        std::shuffle(ids.begin(), ids.end(), rng);
    }

    // Largest-remainder quotas; ties broken toward the lower class id.
    std::vector<std::pair<int, std::size_t>> quota;
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (const auto& [cls, ids] : by_class) {
        const double exact = static_cast<double>(n) * static_cast<double>(ids.size()) / static_cast<double>(labeled_total);
        const auto base = static_cast<std::size_t>(std::floor(exact));
        quota.emplace_back(cls, base);
        remainders.emplace_back(exact - static_cast<double>(base), cls);
        assigned += base;
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % remainders.size()) {
        const int cls = remainders[k].second;
        auto it = std::find_if(quota.begin(), quota.end(), [&](const auto& q) { return q.first == cls; });
        if (it->second < by_class[cls].size()) {
            ++it->second;
            ++assigned;
        }
    }

    IdList taken;
    std::set<SampleId> taken_set;
    for (const auto& [cls, q] : quota) {
        const IdList& ids = by_class[cls];
        for (std::size_t i = 0; i < q; ++i) {
            taken.push_back(ids[i]);
            taken_set.insert(ids[i]);
        }
    }
    IdList rest;
    for (SampleId id : universe) {
        if (!taken_set.count(id)) rest.push_back(id);
    }
    std::sort(taken.begin(), taken.end());
    std::sort(rest.begin(), rest.end());
    return {taken, rest};
}

PoolSplit split_pools(const Dataset& ds, const IdList& universe, std::size_t init_labeled_n, std::size_t reward_n,
                      std::uint64_t seed) {
    if (init_labeled_n + reward_n > universe.size()) {
        throw InsufficientDataError("initial labeled (" + std::to_string(init_labeled_n) + ") + reward (" +
                                    std::to_string(reward_n) + ") exceed the " + std::to_string(universe.size()) +
                                    " available samples");
    }
    auto [labeled, rest] = stratified_take(ds, universe, init_labeled_n, derive_seed(seed, "split.labeled"));
    auto [reward, unlabeled] = stratified_take(ds, rest, reward_n, derive_seed(seed, "split.reward"));
    return PoolSplit{std::move(labeled), std::move(unlabeled), std::move(reward)};
}

PoolSplit split_pools(const Dataset& ds, std::size_t init_labeled_n, std::size_t reward_n, std::uint64_t seed) {
    return split_pools(ds, ds.ids(), init_labeled_n, reward_n, seed);
}

}  // namespace issm
