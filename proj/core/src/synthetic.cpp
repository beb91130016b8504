#include "uirate/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uirate/image_io.hpp"
#include "uirate/rand.hpp"

namespace uirate {

namespace {

constexpr double kWb = 0.45, kWr = 0.30, kWq = 0.25;

const char* kPositive[8] = {"clean", "elegant", "polished", "intuitive",
                            "crisp", "balanced", "modern", "readable"};
const char* kNegative[8] = {"cluttered", "confusing", "noisy", "dated",
                            "cramped", "garish", "awkward", "blurry"};
const char* kCountWord[7] = {"zero", "one", "two", "three", "four", "five", "six"};
const char* kNoun[4] = {"layout", "icons", "text", "spacing"};

struct CategoryWeight {
    const char* name;
    int weight;
};
const CategoryWeight kCategories[8] = {{"shopping", 3},    {"communication", 3}, {"social", 3},
                                       {"tools", 2},       {"finance", 2},       {"travel", 1},
                                       {"news", 1},        {"games", 1}};

std::string pick_category(std::mt19937_64& rng) {
    int total = 0;
    for (const auto& c : kCategories) total += c.weight;
    auto roll = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(total)));
    for (const auto& c : kCategories) {
        roll -= c.weight;
        if (roll < 0) return c.name;
    }
    return kCategories[0].name;
}

ImageU8 render_screen(std::mt19937_64& rng, int size, int gray, int rects) {
    ImageU8 img;
    img.width = size;
    img.height = size;
    img.pixels.assign(static_cast<std::size_t>(size) * size * 3, static_cast<std::uint8_t>(gray));
    for (int i = 0; i < rects; ++i) {
        const int w = 4 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(size / 4)));
        const int h = 4 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(size / 4)));
        const int x0 = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(std::max(1, size - w))));
        const int y0 = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(std::max(1, size - h))));
        for (int y = y0; y < std::min(size, y0 + h); ++y) {
            for (int x = x0; x < std::min(size, x0 + w); ++x) {
                auto* p = img.pixels.data() + (static_cast<std::size_t>(y) * size + x) * 3;
                p[0] = p[1] = p[2] = 25;
            }
        }
    }
    return img;
}

}  // namespace

double synthetic_true_rating(double brightness, int rect_count, double caption_quality) {
    const double u = kWb * brightness + kWr * (1.0 - rect_count / 6.0) + kWq * caption_quality;
    return 1.0 + 4.0 * std::clamp(u, 0.0, 1.0);
}

Manifest generate_synthetic(const SyntheticOptions& opts, std::vector<SyntheticSample>* truth) {
    if (opts.n < 1) throw std::invalid_argument("generate_synthetic: n must be >= 1");
    if (opts.image_size < 16) throw std::invalid_argument("generate_synthetic: image_size must be >= 16");
    if (opts.dir.empty()) throw std::invalid_argument("generate_synthetic: output dir required");

    namespace fs = std::filesystem;
    const fs::path root(opts.dir);
    fs::create_directories(root / "images");

    std::mt19937_64 rng(opts.seed);

    // Stratified latent targets guarantee the rating range is covered.
    std::vector<std::size_t> strata(opts.n);
    std::iota(strata.begin(), strata.end(), 0);
    for (std::size_t i = opts.n; i > 1; --i) {
        std::swap(strata[i - 1], strata[uniform_below(rng, i)]);
    }

    Manifest m;
    if (truth) truth->clear();
    nlohmann::json truth_rows = nlohmann::json::array();

    for (std::size_t idx = 0; idx < opts.n; ++idx) {
        const double u = (static_cast<double>(strata[idx]) + unit_uniform(rng)) / static_cast<double>(opts.n);

        // Decompose u into feasible planted features: quality slots first,
        // then rectangle count, brightness takes the exact remainder.
        std::vector<int> pc_ok;
        for (int pc = 0; pc <= 4; ++pc) {
            const double rem = u - kWq * (pc / 4.0);
            if (rem >= -1e-12 && rem <= kWb + kWr + 1e-12) pc_ok.push_back(pc);
        }
        const int pc = pc_ok[uniform_below(rng, pc_ok.size())];
        const double q = pc / 4.0;

        std::vector<int> r_ok;
        for (int r = 0; r <= 6; ++r) {
            const double b = (u - kWq * q - kWr * (1.0 - r / 6.0)) / kWb;
            if (b >= -1e-12 && b <= 1.0 + 1e-12) r_ok.push_back(r);
        }
        const int rects = r_ok[uniform_below(rng, r_ok.size())];
        double b = std::clamp((u - kWq * q - kWr * (1.0 - rects / 6.0)) / kWb, 0.0, 1.0);

        // Quantize brightness to the 8-bit level that actually reaches disk,
        // so the published truth is exact over file contents.
        const int gray = static_cast<int>(std::lround(255.0 * b));
        b = gray / 255.0;
        const double y_true = synthetic_true_rating(b, rects, q);

        char name[32];
        std::snprintf(name, sizeof name, "img_%05zu.png", idx);
        const fs::path img_path = root / "images" / name;
        write_png(img_path.string(), render_screen(rng, opts.image_size, gray, rects));

        // Quality slots: pc positive words, the rest negative, one per noun.
        std::string words[4];
        int pos_left = pc;
        for (int slot = 0; slot < 4; ++slot) {
            const int slots_left = 4 - slot;
            const bool positive = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(slots_left))) < pos_left;
            if (positive) --pos_left;
            const auto& pool = positive ? kPositive : kNegative;
            words[slot] = pool[uniform_below(rng, 8)];
        }
        const std::string category = pick_category(rng);
        std::string caption = "a " + category + " screen with " + kCountWord[rects] + " panels";
        for (int slot = 0; slot < 4; ++slot) {
            caption += " , " + words[slot] + " " + kNoun[slot];
        }

        ScreenSample s;
        s.image_path = img_path.string();
        s.caption = caption;
        s.category = category;
        const double noise = opts.noise > 0.0 ? opts.noise * (2.0 * unit_uniform(rng) - 1.0) : 0.0;
        s.avg_rating = std::clamp(y_true + noise, 1.0, 5.0);
        s.num_ratings = 5 + static_cast<std::int64_t>(uniform_below(rng, 4996));
        m.samples.push_back(std::move(s));

        SyntheticSample t{b, rects, q, y_true};
        if (truth) truth->push_back(t);
        truth_rows.push_back({{"brightness", t.brightness},
                              {"rect_count", t.rect_count},
                              {"caption_quality", t.caption_quality},
                              {"true_rating", t.true_rating}});
    }

    const char* manifest_name = opts.manifest_format == ManifestFormat::Csv ? "manifest.csv" : "manifest.jsonl";
    const fs::path manifest_path = root / manifest_name;
    save_manifest(manifest_path.string(), m, opts.manifest_format);
    m.source_path = manifest_path.string();

    std::ofstream truth_out(root / "truth.json");
    truth_out << truth_rows.dump(1) << '\n';

    return m;
}

}  // namespace uirate
