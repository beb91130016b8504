#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uirate/data.hpp"

namespace uirate {

// Planted features behind one generated sample. The rating is an exact
// function of these via synthetic_true_rating, so learnability is testable.
struct SyntheticSample {
    double brightness = 0.0;       // background gray level / 255
    int rect_count = 0;            // dark panels drawn on the screen, 0..6
    double caption_quality = 0.0;  // fraction of quality slots filled positively
    double true_rating = 0.0;      // rating before noise
};

struct SyntheticOptions {
    std::size_t n = 64;
    std::uint64_t seed = 1234;
    int image_size = 64;
    double noise = 0.1;  // half-width of uniform rating noise; 0 disables
    std::string dir;     // output root; images land in <dir>/images/
    ManifestFormat manifest_format = ManifestFormat::Csv;
};

// Published ground truth: 1 + 4 * (0.45 b + 0.30 (1 - r/6) + 0.25 q).
double synthetic_true_rating(double brightness, int rect_count, double caption_quality);

// Writes <dir>/images/*.png, <dir>/manifest.(csv|jsonl), <dir>/truth.json
// and returns the manifest. Bit-identical output for a fixed seed.
Manifest generate_synthetic(const SyntheticOptions& opts, std::vector<SyntheticSample>* truth = nullptr);

}  // namespace uirate
