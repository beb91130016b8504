#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace uirate {

// One manifest row: a screenshot with its caption and rating aggregate.
struct ScreenSample {
    std::string image_path;
    std::string caption;
    std::string category;
    double avg_rating = 0.0;    // valid range [1, 5]
    std::int64_t num_ratings = 0;

    bool operator==(const ScreenSample&) const = default;
};

enum class Split { Train, Val, Test };
const char* split_name(Split s);

// Accepted + rejected always equals the number of input rows; every
// rejection lands in exactly one reason bucket.
struct LoadReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::map<std::string, std::size_t> reasons;

    std::string to_json(int indent = -1) const;
};

struct Manifest {
    std::vector<ScreenSample> samples;
    std::string source_path;
    std::vector<Split> splits;  // parallel to samples once assign_splits ran
};

enum class ManifestFormat { Csv, Jsonl };

// Picks Csv for .csv, Jsonl for .jsonl/.ndjson; throws otherwise.
ManifestFormat manifest_format_from_path(const std::string& path);

struct LoadOptions {
    bool check_files = true;  // reject rows whose image_path does not resolve
};

// Throws on unreadable files or a CSV header missing a required column
// (error names the column). Bad rows are rejected row-by-row, never abort.
Manifest load_manifest(const std::string& path, ManifestFormat format,
                       LoadReport* report = nullptr, const LoadOptions& opts = {});

void save_manifest(const std::string& path, const Manifest& m, ManifestFormat format);

// Deterministic platform-independent assignment: bucket 0-7 train, 8 val,
// 9 test from a seeded FNV-1a hash of the sample key.
Split split_of(const std::string& key, std::uint64_t seed);
void assign_splits(Manifest& m, std::uint64_t seed);
std::vector<std::size_t> split_indices(const Manifest& m, Split s);

struct DatasetStats {
    std::size_t n = 0;
    // count descending, name ascending on ties
    std::vector<std::pair<std::string, std::size_t>> category_counts;
    std::vector<std::size_t> rating_hist;  // 16 quarter-unit bins over [1, 5]
    double rating_mean = 0.0;

    std::string to_json(int indent = -1) const;
};

DatasetStats dataset_stats(const Manifest& m);

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double v);

}  // namespace uirate
