#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tra/align.hpp"
#include "tra/common.hpp"

namespace tra {

// One aligned training sample: pixels in [0,1], per-AU intensity codes in
// {0..5}, subject identity and the aligned landmarks.
struct LabeledSample {
    std::string id;
    std::string subject;
    std::int64_t image_size = 0;
    std::vector<float> image; // planar 3*S*S
    std::array<int, 8> intensities{};
    LandmarkSet landmarks;
};

struct Dataset {
    std::int64_t image_size = 0;
    std::vector<LabeledSample> samples;
};

struct ManifestRow {
    std::string id;
    std::string path; // relative to the manifest directory
    std::string subject;
    std::array<int, 8> intensities{};
    bool bad = false;
};

// CSV with header id,path,subject,au1,au2,au4,au6,au9,au12,au25,au26 and an
// optional trailing `bad` column marking frames with unusable annotations.
struct DatasetManifest {
    std::string root;          // directory of the manifest file
    std::string landmark_path; // <root>/landmarks.txt
    std::vector<ManifestRow> rows;
};

DatasetManifest read_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path, const std::vector<ManifestRow>& rows);

// One sample per line: id then x1 y1 ... x66 y66.
std::map<std::string, LandmarkSet> read_landmarks(const std::string& path);
void write_landmarks(const std::string& path,
                     const std::vector<std::pair<std::string, LandmarkSet>>& entries);

// Binary PPM (P6, maxval 255); grayscale content is stored replicated over
// the three channels.
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

struct LoadReport {
    std::size_t loaded = 0;
    std::size_t skipped_bad = 0;   // rows flagged as bad annotations
    std::size_t skipped_error = 0; // rows rejected with a diagnostic
    std::vector<std::string> diagnostics;
};

// Reads the manifest, decodes and aligns every usable row to out_size.
// Individual broken rows are skipped with a diagnostic; more than 10%
// skipped is a hard failure.
Dataset load_dataset(const std::string& manifest_path, std::int64_t out_size,
                     LoadReport* report = nullptr);

// Synthetic region-localized face generator: per-subject identity texture,
// per-frame AU stamps whose support stays strictly inside the AU's region
// band, Gaussian pixel noise, and anchor landmarks near the alignment
// targets with small jitter.
struct SynthSpec {
    int num_subjects = 9;
    int frames_per_subject = 200;
    std::int64_t image_size = 64;
    std::uint64_t seed = 7;
    std::array<double, 8> activation_prob{0.30, 0.22, 0.35, 0.28, 0.18, 0.32, 0.40, 0.15};
    double signal = 0.55;
    double noise_sigma = 0.04;

    void validate() const;
};

SynthSpec synth_spec_from_json_text(const std::string& text);
SynthSpec synth_spec_from_file(const std::string& path);
std::string synth_spec_to_json_text(const SynthSpec& spec);

// Rows [begin, end) of the band an AU's synthetic stamp lives in, at image
// resolution (upper/middle/lower as in the region module).
std::array<std::int64_t, 2> synth_au_band(int au_index, std::int64_t image_size);

// Writes <out_dir>/<subject>/<frame>.ppm, manifest.csv and landmarks.txt;
// returns the manifest path. Deterministic per seed.
std::string generate_synthetic(const SynthSpec& spec, const std::string& out_dir);

// Renders one frame's pixels (no disk): exposed so tests can compare active
// and inactive variants of the same frame.
Image synth_frame(const SynthSpec& spec, int subject, int frame,
                  const std::array<std::uint8_t, 8>& active, bool with_noise);

struct DatasetStats {
    std::array<std::int64_t, 8> positive_count{};
    std::array<double, 8> positive_rate{};
    std::map<std::string, std::int64_t> frames_per_subject;
    std::size_t total = 0;
};

DatasetStats dataset_stats(const Dataset& ds, int binarize_threshold = 2);

} // namespace tra
