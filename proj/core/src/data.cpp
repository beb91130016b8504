#include "uirate/data.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace uirate {

namespace {

constexpr const char* kFields[5] = {"image_path", "caption", "category", "avg_rating", "num_ratings"};

// RFC 4180 field splitting: quoted fields may hold commas, doubled quotes,
// and embedded newlines. Returns one record per call, empty optional at EOF.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string cur;
    bool in_quotes = false;
    bool any = false;
    int ch;
    while ((ch = in.get()) != EOF) {
        any = true;
        const char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    cur.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\n') {
            break;
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get();
            break;
        } else {
            cur.push_back(c);
        }
    }
    if (!any) return false;
    fields.push_back(std::move(cur));
    return true;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e && !s.empty();
}

bool parse_int(const std::string& s, std::int64_t& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e && !s.empty();
}

void reject(LoadReport* report, const char* reason) {
    if (report) {
        ++report->rejected;
        ++report->reasons[reason];
    }
}

// Shared row validation; returns the rejection reason or nullptr.
const char* validate(const ScreenSample& s, const LoadOptions& opts) {
    if (s.image_path.empty()) return "empty_image_path";
    if (!(s.avg_rating >= 1.0 && s.avg_rating <= 5.0)) return "rating_range";
    if (s.num_ratings < 0) return "negative_num_ratings";
    if (opts.check_files && !std::filesystem::exists(s.image_path)) return "missing_image";
    return nullptr;
}

void load_csv(std::istream& in, Manifest& m, LoadReport* report, const LoadOptions& opts) {
    std::vector<std::string> fields;
    if (!read_csv_record(in, fields)) throw std::runtime_error("load_manifest: empty csv");
    int col[5];
    for (int f = 0; f < 5; ++f) {
        auto it = std::find(fields.begin(), fields.end(), kFields[f]);
        if (it == fields.end()) {
            throw std::runtime_error(std::string("load_manifest: csv header missing column '") + kFields[f] + "'");
        }
        col[f] = static_cast<int>(it - fields.begin());
    }
    const std::size_t ncols = fields.size();
    while (read_csv_record(in, fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
        if (fields.size() != ncols) {
            reject(report, "column_count");
            continue;
        }
        ScreenSample s;
        s.image_path = fields[static_cast<std::size_t>(col[0])];
        s.caption = fields[static_cast<std::size_t>(col[1])];
        s.category = fields[static_cast<std::size_t>(col[2])];
        if (!parse_double(fields[static_cast<std::size_t>(col[3])], s.avg_rating)) {
            reject(report, "bad_rating");
            continue;
        }
        if (!parse_int(fields[static_cast<std::size_t>(col[4])], s.num_ratings)) {
            reject(report, "bad_num_ratings");
            continue;
        }
        if (const char* why = validate(s, opts)) {
            reject(report, why);
            continue;
        }
        if (report) ++report->accepted;
        m.samples.push_back(std::move(s));
    }
}

void load_jsonl(std::istream& in, Manifest& m, LoadReport* report, const LoadOptions& opts) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            reject(report, "bad_json");
            continue;
        }
        bool missing = false;
        for (const char* f : kFields) {
            if (!j.contains(f)) {
                missing = true;
                break;
            }
        }
        if (missing) {
            reject(report, "missing_field");
            continue;
        }
        ScreenSample s;
        if (!j["image_path"].is_string() || !j["caption"].is_string() || !j["category"].is_string() ||
            !j["avg_rating"].is_number() || !j["num_ratings"].is_number_integer()) {
            reject(report, "bad_field_type");
            continue;
        }
        s.image_path = j["image_path"].get<std::string>();
        s.caption = j["caption"].get<std::string>();
        s.category = j["category"].get<std::string>();
        s.avg_rating = j["avg_rating"].get<double>();
        s.num_ratings = j["num_ratings"].get<std::int64_t>();
        if (const char* why = validate(s, opts)) {
            reject(report, why);
            continue;
        }
        if (report) ++report->accepted;
        m.samples.push_back(std::move(s));
    }
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

ManifestFormat manifest_format_from_path(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".csv") return ManifestFormat::Csv;
    if (ext == ".jsonl" || ext == ".ndjson") return ManifestFormat::Jsonl;
    throw std::invalid_argument("manifest format not recognized from extension: " + path);
}

Manifest load_manifest(const std::string& path, ManifestFormat format,
                       LoadReport* report, const LoadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    Manifest m;
    m.source_path = path;
    if (format == ManifestFormat::Csv) {
        load_csv(in, m, report, opts);
    } else {
        load_jsonl(in, m, report, opts);
    }
    return m;
}

void save_manifest(const std::string& path, const Manifest& m, ManifestFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
    if (format == ManifestFormat::Csv) {
        out << "image_path,caption,category,avg_rating,num_ratings\n";
        for (const auto& s : m.samples) {
            out << csv_escape(s.image_path) << ',' << csv_escape(s.caption) << ','
                << csv_escape(s.category) << ',' << format_double(s.avg_rating) << ','
                << s.num_ratings << '\n';
        }
    } else {
        for (const auto& s : m.samples) {
            nlohmann::json j;
            j["image_path"] = s.image_path;
            j["caption"] = s.caption;
            j["category"] = s.category;
            j["avg_rating"] = s.avg_rating;
            j["num_ratings"] = s.num_ratings;
            out << j.dump() << '\n';
        }
    }
    if (!out) throw std::runtime_error("save_manifest: write failed for " + path);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

Split split_of(const std::string& key, std::uint64_t seed) {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the key bytes
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    h = splitmix64(h ^ splitmix64(seed));
    const std::uint64_t bucket = h % 10;
    if (bucket < 8) return Split::Train;
    if (bucket == 8) return Split::Val;
    return Split::Test;
}

void assign_splits(Manifest& m, std::uint64_t seed) {
    m.splits.resize(m.samples.size());
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        m.splits[i] = split_of(m.samples[i].image_path, seed);
    }
}

std::vector<std::size_t> split_indices(const Manifest& m, Split s) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.splits.size(); ++i) {
        if (m.splits[i] == s) out.push_back(i);
    }
    return out;
}

DatasetStats dataset_stats(const Manifest& m) {
    if (m.samples.empty()) throw std::invalid_argument("dataset_stats: empty manifest");
    DatasetStats st;
    st.n = m.samples.size();
    st.rating_hist.assign(16, 0);
    std::map<std::string, std::size_t> counts;
    double sum = 0.0;
    for (const auto& s : m.samples) {
        ++counts[s.category];
        sum += s.avg_rating;
        int bin = static_cast<int>((s.avg_rating - 1.0) / 0.25);
        bin = std::clamp(bin, 0, 15);
        ++st.rating_hist[static_cast<std::size_t>(bin)];
    }
    st.rating_mean = sum / static_cast<double>(st.n);
    st.category_counts.assign(counts.begin(), counts.end());
    std::sort(st.category_counts.begin(), st.category_counts.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    return st;
}

std::string LoadReport::to_json(int indent) const {
    nlohmann::json j;
    j["accepted"] = accepted;
    j["rejected"] = rejected;
    j["reasons"] = reasons;
    return j.dump(indent);
}

std::string DatasetStats::to_json(int indent) const {
    nlohmann::json j;
    j["n"] = n;
    j["rating_mean"] = rating_mean;
    auto cats = nlohmann::json::array();
    for (const auto& [name, count] : category_counts) {
        cats.push_back({{"category", name}, {"count", count}});
    }
    j["categories"] = cats;
    j["rating_hist"] = rating_hist;
    j["rating_bin_width"] = 0.25;
    j["rating_bin_min"] = 1.0;
    return j.dump(indent);
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace uirate
