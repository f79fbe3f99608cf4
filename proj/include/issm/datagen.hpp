#pragma once

// Seeded synthetic skeleton data, feature-file ingestion, and pool splits.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "issm/linalg.hpp"
#include "issm/recognizer.hpp"
#include "issm/types.hpp"

namespace issm {

struct SyntheticSpec {
    int class_count = 2;
    int samples_per_class = 10;
    int joints = 4;
    int dims = 3;
    int frames = 16;
    double class_separation = 1.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per class: sinusoidal joint trajectories (class-specific frequency, phase and
/// amplitude scaled by class_separation) plus i.i.d. Gaussian jitter per frame.
/// Sequences are ordered class by class.
std::vector<SkeletonSequence> generate(const SyntheticSpec& spec);

/// One row of classifier input with its id and optional label.
struct Sample {
    SampleId id = 0;
    std::optional<int> label;
    Vector input;
};

enum class InputKind { pooled_sequences, precomputed };

/// Immutable collection of samples keyed by id. Sample inputs are what the
/// recognizer consumes: pooled sequence features or externally supplied embeddings.
class Dataset {
public:
    Dataset(std::vector<Sample> samples, InputKind kind);
    /// Ids 0..n-1 in sequence order; inputs are pooled features.
    static Dataset from_sequences(const std::vector<SkeletonSequence>& seqs);

    std::size_t size() const noexcept { return samples_.size(); }
    const std::vector<Sample>& samples() const noexcept { return samples_; }
    const Sample& at(SampleId id) const;
    bool contains(SampleId id) const { return index_.count(id) > 0; }
    Eigen::Index input_dim() const noexcept { return input_dim_; }
    int class_count() const noexcept { return class_count_; }
    InputKind kind() const noexcept { return kind_; }

    IdList ids() const;
    Matrix inputs(const IdList& ids) const;
    std::vector<int> labels(const IdList& ids) const;

    friend bool operator==(const Dataset& a, const Dataset& b);

private:
    std::vector<Sample> samples_;
    std::unordered_map<SampleId, std::size_t> index_;
    Eigen::Index input_dim_ = 0;
    int class_count_ = 0;
    InputKind kind_;
};

enum class FeatureFormat { csv, jsonl };

FeatureFormat feature_format_from_string(const std::string& s);

/// CSV: header `id,label,f0,...,f{m-1}`, label empty when unknown.
/// JSONL: one {"id", "label", "features"} object per line.
Dataset load_feature_file(const std::filesystem::path& path, FeatureFormat format);
void write_feature_file(const Dataset& ds, const std::filesystem::path& path, FeatureFormat format);

/// JSONL with keys id, label, frames (T x p x d nested arrays).
std::vector<SkeletonSequence> load_sequence_file(const std::filesystem::path& path);
void write_sequence_file(const std::vector<SkeletonSequence>& seqs, const std::filesystem::path& path);

/// Seeded class-stratified draw of n labeled ids from `universe`, with per-class
/// quotas by largest remainder. Returns (taken, rest), both sorted by id.
std::pair<IdList, IdList> stratified_take(const Dataset& ds, const IdList& universe, std::size_t n,
                                          std::uint64_t seed);

struct PoolSplit {
    IdList labeled;
    IdList unlabeled;
    IdList reward;
};

/// Disjoint, exhaustive split of `universe` into initial labeled, reward, and
/// unlabeled (the remainder) sets.
PoolSplit split_pools(const Dataset& ds, const IdList& universe, std::size_t init_labeled_n, std::size_t reward_n,
                      std::uint64_t seed);
PoolSplit split_pools(const Dataset& ds, std::size_t init_labeled_n, std::size_t reward_n, std::uint64_t seed);

}  // namespace issm
