#include "tra/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tra/metrics.hpp"
#include "tra/region.hpp"
#include "tra/rng.hpp"

namespace fs = std::filesystem;

namespace tra {

// ---- manifest ---------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

constexpr const char* kManifestHeader = "id,path,subject,au1,au2,au4,au6,au9,au12,au25,au26";

} // namespace

DatasetManifest read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    require<DataError>(in.good(), "cannot open manifest ", manifest_path);
    DatasetManifest m;
    const fs::path dir = fs::path(manifest_path).parent_path();
    m.root = dir.string();
    m.landmark_path = (dir / "landmarks.txt").string();

    std::string line;
    require<DataError>(static_cast<bool>(std::getline(in, line)), "empty manifest ",
                       manifest_path);
    const auto header = split_csv_line(line);
    const auto expected = split_csv_line(kManifestHeader);
    const bool with_bad = header.size() == expected.size() + 1 && header.back() == "bad";
    require<DataError>(with_bad || header == expected, "manifest header mismatch in ",
                       manifest_path, "; expected '", kManifestHeader, "[,bad]'");

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        require<DataError>(f.size() == header.size(), manifest_path, ":", lineno, ": expected ",
                           header.size(), " fields, got ", f.size());
        ManifestRow row;
        row.id = f[0];
        row.path = f[1];
        row.subject = f[2];
        for (int a = 0; a < 8; ++a) {
            try {
                row.intensities[static_cast<std::size_t>(a)] = std::stoi(f[static_cast<std::size_t>(3 + a)]);
            } catch (const std::exception&) {
                throw DataError(cat(manifest_path, ":", lineno, ": intensity '",
                                    f[static_cast<std::size_t>(3 + a)], "' is not an integer"));
            }
        }
        if (with_bad) row.bad = f.back() == "1";
        m.rows.push_back(std::move(row));
    }
    return m;
}

void write_manifest(const std::string& manifest_path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(manifest_path, std::ios::trunc);
    require<DataError>(out.good(), "cannot write manifest ", manifest_path);
    bool any_bad = false;
    for (const auto& r : rows) any_bad = any_bad || r.bad;
    out << kManifestHeader << (any_bad ? ",bad" : "") << "\n";
    for (const auto& r : rows) {
        out << r.id << ',' << r.path << ',' << r.subject;
        for (int v : r.intensities) out << ',' << v;
        if (any_bad) out << ',' << (r.bad ? 1 : 0);
        out << "\n";
    }
    require<DataError>(out.good(), "short write to ", manifest_path);
}

// ---- landmarks ----------------------------------------------------------------

std::map<std::string, LandmarkSet> read_landmarks(const std::string& path) {
    std::ifstream in(path);
    require<DataError>(in.good(), "cannot open landmark file ", path);
    std::map<std::string, LandmarkSet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string id;
        is >> id;
        LandmarkSet lm;
        for (std::size_t i = 0; i < lm.xy.size(); ++i) {
            require<DataError>(static_cast<bool>(is >> lm.xy[i]), path, ":", lineno,
                               ": expected 132 coordinates for sample ", id);
        }
        out[id] = lm;
    }
    return out;
}

void write_landmarks(const std::string& path,
                     const std::vector<std::pair<std::string, LandmarkSet>>& entries) {
    std::ofstream out(path, std::ios::trunc);
    require<DataError>(out.good(), "cannot write landmark file ", path);
    char buf[32];
    for (const auto& [id, lm] : entries) {
        out << id;
        for (double v : lm.xy) {
            std::snprintf(buf, sizeof(buf), " %.4f", v);
            out << buf;
        }
        out << "\n";
    }
    require<DataError>(out.good(), "short write to ", path);
}

// ---- PPM ------------------------------------------------------------------------

void write_ppm(const std::string& path, const Image& image) {
    require<ShapeError>(image.channels == 3, "write_ppm expects 3 channels, got ", image.channels);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require<DataError>(out.good(), "cannot write image ", path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    for (std::int64_t y = 0; y < image.height; ++y) {
        for (std::int64_t x = 0; x < image.width; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                row[static_cast<std::size_t>(3 * x + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    require<DataError>(out.good(), "short write to ", path);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<DataError>(in.good(), "cannot open image ", path);
    std::string magic;
    in >> magic;
    require<DataError>(magic == "P6", path, " is not a binary PPM (magic '", magic, "')");
    std::int64_t w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    require<DataError>(w > 0 && h > 0, path, ": bad dimensions ", w, "x", h);
    require<DataError>(maxval == 255, path, ": only maxval 255 supported, got ", maxval);
    in.get(); // single whitespace after header
    std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require<DataError>(in.gcount() == static_cast<std::streamsize>(raw.size()), path,
                       ": truncated pixel data");
    Image im = Image::zeros(3, h, w);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                im.at(c, y, x) =
                    static_cast<float>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0f;
            }
        }
    }
    return im;
}

// ---- dataset loading ---------------------------------------------------------------

Dataset load_dataset(const std::string& manifest_path, std::int64_t out_size,
                     LoadReport* report) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    const auto landmarks = read_landmarks(manifest.landmark_path);

    Dataset ds;
    ds.image_size = out_size;
    LoadReport local;
    LoadReport& rep = report ? *report : local;

    for (const auto& row : manifest.rows) {
        if (row.bad) {
            ++rep.skipped_bad;
            continue;
        }
        const auto reject = [&](const std::string& why) {
            ++rep.skipped_error;
            rep.diagnostics.push_back(cat("sample ", row.id, ": ", why));
        };
        bool in_range = true;
        for (int v : row.intensities) in_range = in_range && v >= 0 && v <= 5;
        if (!in_range) {
            reject("intensity outside {0..5}");
            continue;
        }
        const auto lm_it = landmarks.find(row.id);
        if (lm_it == landmarks.end()) {
            reject("no landmarks");
            continue;
        }
        const fs::path img_path = fs::path(manifest.root) / row.path;
        if (!fs::exists(img_path)) {
            reject(cat("missing image ", img_path.string()));
            continue;
        }
        try {
            const Image raw = read_ppm(img_path.string());
            const AlignResult aligned = similarity_align(raw, lm_it->second, out_size);
            LabeledSample s;
            s.id = row.id;
            s.subject = row.subject;
            s.image_size = out_size;
            s.image = aligned.image.px;
            s.intensities = row.intensities;
            s.landmarks = aligned.landmarks;
            ds.samples.push_back(std::move(s));
            ++rep.loaded;
        } catch (const Error& e) {
            reject(e.what());
        }
    }

    const std::size_t considered = rep.loaded + rep.skipped_error;
    require<DataError>(considered == 0 || rep.skipped_error * 10 <= considered,
                       "more than 10% of manifest rows unusable (", rep.skipped_error, " of ",
                       considered, ")");
    return ds;
}

// ---- synthetic generator ---------------------------------------------------------

void SynthSpec::validate() const {
    require<ConfigError>(num_subjects >= 1, "synth: num_subjects must be >= 1");
    require<ConfigError>(frames_per_subject >= 1, "synth: frames_per_subject must be >= 1");
    require<ConfigError>(image_size >= 16 && image_size % 8 == 0,
                         "synth: image_size must be >= 16 and divisible by 8, got ", image_size);
    for (double p : activation_prob) {
        require<ConfigError>(p >= 0.0 && p <= 1.0, "synth: activation probabilities must lie in "
                                                   "[0,1], got ", p);
    }
    require<ConfigError>(signal > 0.0 && signal <= 1.0, "synth: signal must lie in (0,1]");
    require<ConfigError>(noise_sigma >= 0.0, "synth: noise_sigma must be >= 0");
}

std::array<std::int64_t, 2> synth_au_band(int au_index, std::int64_t s) {
    // AU order: AU1 AU2 AU4 | AU6 AU9 | AU12 AU25 AU26
    if (au_index < 3) return {0, s / 2};
    if (au_index < 5) return {s / 4, 3 * s / 4};
    return {s / 2, s};
}

namespace {

struct Stamp {
    double cx, cy;     // center, pixels
    double theta;      // stripe orientation
    double radius;     // Gaussian support radius
};

// Fixed per-AU stamp geometry, mirror-symmetric like real (bilateral) action
// units so that horizontal flips are label-preserving: off-center AUs stamp a
// left/right pair with mirrored stripe orientation, central AUs use a single
// flip-invariant patch (stripes along an image axis). Supports stay strictly
// inside the AU's band.
std::vector<Stamp> au_stamps(int a, std::int64_t s) {
    const auto band = synth_au_band(a, s);
    const int lane = a < 3 ? a : (a < 5 ? a - 3 : a - 5);
    const int lanes = a < 3 ? 3 : (a < 5 ? 2 : 3);
    const double sd = static_cast<double>(s);
    const double radius = sd / 12.0;
    // rows: spread lanes across the usable (margined) part of the band
    const double lo = static_cast<double>(band[0]) + sd / 8.0;
    const double hi = static_cast<double>(band[1]) - sd / 8.0;
    const double cy = lanes == 1 ? (lo + hi) / 2.0
                                 : lo + (hi - lo) * static_cast<double>(lane) /
                                           static_cast<double>(lanes - 1);
    // columns: outer pair, inner pair, center
    const double dx = lane == 0 ? 0.30 * sd : (lane == 1 && lanes == 3 ? 0.15 * sd : 0.0);
    // the pixel grid mirrors about (s-1)/2
    const double axis = (sd - 1.0) / 2.0;
    std::vector<Stamp> stamps;
    if (dx == 0.0) {
        // central patch: stripes along an image axis are mirror-invariant
        const double theta = a % 2 == 0 ? 0.0 : 1.5707963267948966;
        stamps.push_back({axis, cy, theta, radius});
    } else {
        const double theta = 0.39269908169872414 * (1 + a); // pi/8 steps, axis-free
        stamps.push_back({axis - dx, cy, theta, radius});
        stamps.push_back({axis + dx, cy, 3.141592653589793 - theta, radius});
    }
    return stamps;
}

void add_stamp(Image& im, const Stamp& st, double amplitude, std::int64_t s) {
    const double sigma = st.radius / 2.2;
    const double wavelen = static_cast<double>(s) / 8.0;
    const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(st.cy - st.radius));
    const std::int64_t y1 = std::min<std::int64_t>(s - 1, static_cast<std::int64_t>(st.cy + st.radius));
    const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(st.cx - st.radius));
    const std::int64_t x1 = std::min<std::int64_t>(s - 1, static_cast<std::int64_t>(st.cx + st.radius));
    for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) {
            const double dx = static_cast<double>(x) - st.cx;
            const double dy = static_cast<double>(y) - st.cy;
            const double d2 = dx * dx + dy * dy;
            if (d2 > st.radius * st.radius) continue;
            const double env = std::exp(-d2 / (2.0 * sigma * sigma));
            const double phase =
                6.283185307179586 * (dx * std::cos(st.theta) + dy * std::sin(st.theta)) / wavelen;
            const double v = amplitude * env * (0.6 + 0.4 * std::cos(phase));
            for (std::int64_t c = 0; c < 3; ++c) {
                im.at(c, y, x) = static_cast<float>(im.at(c, y, x) + v);
            }
        }
    }
}

Image subject_texture(const SynthSpec& spec, int subject) {
    const std::int64_t s = spec.image_size;
    Image im = Image::zeros(3, s, s);
    Rng rng = Rng::stream(spec.seed, "identity", static_cast<std::uint64_t>(subject));
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::array<Wave, 4> waves;
    for (auto& wv : waves) {
        wv.fx = rng.uniform(0.5, 2.5);
        wv.fy = rng.uniform(0.5, 2.5);
        wv.phase = rng.uniform(0.0, 6.283185307179586);
        wv.amp = rng.uniform(0.015, 0.05);
    }
    for (std::int64_t y = 0; y < s; ++y) {
        for (std::int64_t x = 0; x < s; ++x) {
            double v = 0.45;
            for (const auto& wv : waves) {
                v += wv.amp * std::cos(6.283185307179586 *
                                           (wv.fx * static_cast<double>(x) / static_cast<double>(s) +
                                            wv.fy * static_cast<double>(y) / static_cast<double>(s)) +
                                       wv.phase);
            }
            for (std::int64_t c = 0; c < 3; ++c) im.at(c, y, x) = static_cast<float>(v);
        }
    }
    return im;
}

} // namespace

Image synth_frame(const SynthSpec& spec, int subject, int frame,
                  const std::array<std::uint8_t, 8>& active, bool with_noise) {
    const std::int64_t s = spec.image_size;
    Image im = subject_texture(spec, subject);
    for (int a = 0; a < 8; ++a) {
        if (!active[static_cast<std::size_t>(a)]) continue;
        for (const Stamp& st : au_stamps(a, s)) add_stamp(im, st, spec.signal, s);
    }
    if (with_noise && spec.noise_sigma > 0.0) {
        Rng rng = Rng::stream(spec.seed, "noise",
                              static_cast<std::uint64_t>(subject) * 1000003u +
                                  static_cast<std::uint64_t>(frame));
        for (std::int64_t y = 0; y < s; ++y) {
            for (std::int64_t x = 0; x < s; ++x) {
                const float nz = static_cast<float>(spec.noise_sigma * rng.normal());
                for (std::int64_t c = 0; c < 3; ++c) im.at(c, y, x) += nz;
            }
        }
    }
    for (auto& v : im.px) v = std::clamp(v, 0.0f, 1.0f);
    return im;
}

std::string generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    const std::int64_t s = spec.image_size;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    require<DataError>(fs::is_directory(out_dir), "cannot create output directory ", out_dir);

    std::vector<ManifestRow> rows;
    std::vector<std::pair<std::string, LandmarkSet>> landmark_entries;

    for (int subj = 0; subj < spec.num_subjects; ++subj) {
        char subj_name[16];
        std::snprintf(subj_name, sizeof(subj_name), "s%02d", subj);
        const fs::path subj_dir = fs::path(out_dir) / subj_name;
        fs::create_directories(subj_dir, ec);
        require<DataError>(fs::is_directory(subj_dir), "cannot create ", subj_dir.string());

        for (int frame = 0; frame < spec.frames_per_subject; ++frame) {
            Rng label_rng = Rng::stream(spec.seed, "labels",
                                        static_cast<std::uint64_t>(subj) * 1000003u +
                                            static_cast<std::uint64_t>(frame));
            std::array<std::uint8_t, 8> active{};
            for (int a = 0; a < 8; ++a) {
                active[static_cast<std::size_t>(a)] =
                    label_rng.bernoulli(spec.activation_prob[static_cast<std::size_t>(a)]) ? 1 : 0;
            }
            const Image im = synth_frame(spec, subj, frame, active, true);

            char frame_name[16];
            std::snprintf(frame_name, sizeof(frame_name), "f%03d", frame);
            const std::string rel = cat(subj_name, "/", frame_name, ".ppm");
            write_ppm((fs::path(out_dir) / rel).string(), im);

            Rng jit = Rng::stream(spec.seed, "jitter",
                                  static_cast<std::uint64_t>(subj) * 1000003u +
                                      static_cast<std::uint64_t>(frame));
            const double jx = jit.uniform(-1.5, 1.5);
            const double jy = jit.uniform(-1.5, 1.5);
            LandmarkSet lm;
            // Face-outline filler points on an ellipse; only the anchors are
            // semantically meaningful.
            const double cx = static_cast<double>(s) / 2.0 + jx;
            const double cy = static_cast<double>(s) / 2.0 + jy;
            for (int i = 0; i < LandmarkSet::kCount; ++i) {
                const double ang = 6.283185307179586 * static_cast<double>(i) /
                                   static_cast<double>(LandmarkSet::kCount);
                lm.set(i, cx + 0.4 * static_cast<double>(s) * std::cos(ang),
                       cy + 0.42 * static_cast<double>(s) * std::sin(ang));
            }
            lm.set(lm.nose_mid_index, cx, cy);
            lm.set(lm.jaw_bottom_index, cx, cy + static_cast<double>(s) * 7.0 / 16.0);

            ManifestRow row;
            row.id = cat(subj_name, "_", frame_name);
            row.path = rel;
            row.subject = subj_name;
            for (int a = 0; a < 8; ++a) {
                row.intensities[static_cast<std::size_t>(a)] = active[static_cast<std::size_t>(a)] ? 3 : 0;
            }
            rows.push_back(row);
            landmark_entries.emplace_back(row.id, lm);
        }
    }

    const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
    write_manifest(manifest_path, rows);
    write_landmarks((fs::path(out_dir) / "landmarks.txt").string(), landmark_entries);
    return manifest_path;
}

// ---- stats / spec io ------------------------------------------------------------

DatasetStats dataset_stats(const Dataset& ds, int binarize_threshold) {
    DatasetStats st;
    st.total = ds.samples.size();
    for (const auto& s : ds.samples) {
        const AuLabels lab = binarize(s.intensities, binarize_threshold);
        for (std::size_t a = 0; a < 8; ++a) st.positive_count[a] += lab[a];
        ++st.frames_per_subject[s.subject];
    }
    for (std::size_t a = 0; a < 8; ++a) {
        st.positive_rate[a] = st.total == 0 ? 0.0
                                            : static_cast<double>(st.positive_count[a]) /
                                                  static_cast<double>(st.total);
    }
    return st;
}

SynthSpec synth_spec_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cat("bad synth spec JSON: ", e.what()));
    }
    SynthSpec spec;
    try {
        spec.num_subjects = j.value("num_subjects", spec.num_subjects);
        spec.frames_per_subject = j.value("frames_per_subject", spec.frames_per_subject);
        spec.image_size = j.value("image_size", spec.image_size);
        spec.seed = j.value("seed", spec.seed);
        spec.signal = j.value("signal", spec.signal);
        spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
        if (j.contains("activation_prob")) {
            const auto& p = j.at("activation_prob");
            if (p.is_number()) {
                spec.activation_prob.fill(p.get<double>());
            } else {
                require<ConfigError>(p.is_array() && p.size() == 8,
                                     "activation_prob must be a number or an array of 8");
                for (std::size_t a = 0; a < 8; ++a) spec.activation_prob[a] = p[a].get<double>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(cat("bad synth spec JSON: ", e.what()));
    }
    spec.validate();
    return spec;
}

SynthSpec synth_spec_from_file(const std::string& path) {
    std::ifstream in(path);
    require<ConfigError>(in.good(), "cannot open synth spec ", path);
    std::stringstream ss;
    ss << in.rdbuf();
    return synth_spec_from_json_text(ss.str());
}

std::string synth_spec_to_json_text(const SynthSpec& spec) {
    nlohmann::json j;
    j["num_subjects"] = spec.num_subjects;
    j["frames_per_subject"] = spec.frames_per_subject;
    j["image_size"] = spec.image_size;
    j["seed"] = spec.seed;
    j["activation_prob"] = spec.activation_prob;
    j["signal"] = spec.signal;
    j["noise_sigma"] = spec.noise_sigma;
    return j.dump(2);
}

} // namespace tra
