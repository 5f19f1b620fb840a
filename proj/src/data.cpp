#include "gem/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "gem/error.hpp"
#include "gem/rng.hpp"

namespace gem {

namespace {

constexpr double kPi = 3.14159265358979323846;

Dataset take_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.name = d.name;
    out.seed = d.seed;
    out.params = d.params;
    if (rows.empty()) return out;
    out.X = Tensor(rows.size(), d.dim());
    out.y.reserve(rows.size());
    out.split.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        for (std::size_t j = 0; j < d.dim(); ++j) out.X.at(r, j) = d.X.at(i, j);
        out.y.push_back(d.y[i]);
        out.split.push_back(d.split[i]);
    }
    return out;
}

}  // namespace

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::ood: return "ood";
        case Split::shifted: return "shifted";
    }
    return "?";
}

std::size_t Dataset::classes() const {
    int hi = -1;
    for (int v : y) hi = std::max(hi, v);
    return hi < 0 ? 0 : static_cast<std::size_t>(hi) + 1;
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) idx.push_back(i);
    return idx;
}

Dataset Dataset::filter(Split s) const { return take_rows(*this, indices_of(s)); }

Dataset Dataset::with_split(Split s) const {
    Dataset out = *this;
    out.X = X.detach_copy();
    for (std::size_t i = 0; i < out.split.size(); ++i)
        if (out.y[i] != kOodLabel) out.split[i] = s;
    return out;
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    if (a.dim() != b.dim()) throw std::invalid_argument("Dataset::concat: dimension mismatch");
    Dataset out;
    out.name = a.name;
    out.seed = a.seed;
    out.params = a.params;
    out.X = Tensor(a.size() + b.size(), a.dim());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.dim(); ++j) out.X.at(i, j) = a.X.at(i, j);
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.dim(); ++j) out.X.at(a.size() + i, j) = b.X.at(i, j);
    out.y = a.y;
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
    out.split = a.split;
    out.split.insert(out.split.end(), b.split.begin(), b.split.end());
    return out;
}

Dataset gen_two_moons(std::size_t n, double noise, const OodClusterSpec& ood,
                      std::uint64_t seed) {
    if (n % 2 != 0) throw std::invalid_argument("gen_two_moons: n must be even");
    if (noise < 0.0) throw std::invalid_argument("gen_two_moons: noise must be >= 0");
    Rng rng = Rng::substream(seed, "two_moons");
    const std::size_t half = n / 2;
    Dataset d;
    d.name = "two_moons";
    d.seed = seed;
    d.params = "n=" + std::to_string(n) + " noise=" + std::to_string(noise) +
               " ood_n=" + std::to_string(ood.n);
    d.X = Tensor(n + ood.n, 2);
    d.y.resize(n + ood.n);
    d.split.resize(n + ood.n);
    for (std::size_t i = 0; i < half; ++i) {
        const double t = half == 1 ? 0.0 : kPi * static_cast<double>(i) / static_cast<double>(half - 1);
        d.X.at(i, 0) = std::cos(t) + noise * rng.normal();
        d.X.at(i, 1) = std::sin(t) + noise * rng.normal();
        d.y[i] = 0;
        d.split[i] = Split::train;
        const std::size_t r = half + i;
        d.X.at(r, 0) = 1.0 - std::cos(t) + noise * rng.normal();
        d.X.at(r, 1) = 0.5 - std::sin(t) + noise * rng.normal();
        d.y[r] = 1;
        d.split[r] = Split::train;
    }
    for (std::size_t i = 0; i < ood.n; ++i) {
        const std::size_t r = n + i;
        d.X.at(r, 0) = ood.cx + ood.stddev * rng.normal();
        d.X.at(r, 1) = ood.cy + ood.stddev * rng.normal();
        d.y[r] = kOodLabel;
        d.split[r] = Split::ood;
    }
    return d;
}

Dataset gen_ring_ood(std::size_t n_ood, double radius, double radial_noise, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "ring_ood");
    Dataset d;
    d.name = "ring_ood";
    d.seed = seed;
    d.params = "n=" + std::to_string(n_ood) + " radius=" + std::to_string(radius);
    d.X = Tensor(n_ood, 2);
    d.y.assign(n_ood, kOodLabel);
    d.split.assign(n_ood, Split::ood);
    // centered on the midpoint of the two moons
    const double cx = 0.5, cy = 0.25;
    for (std::size_t i = 0; i < n_ood; ++i) {
        const double a = rng.uniform(0.0, 2.0 * kPi);
        const double r = radius + radial_noise * rng.normal();
        d.X.at(i, 0) = cx + r * std::cos(a);
        d.X.at(i, 1) = cy + r * std::sin(a);
    }
    return d;
}

Dataset gen_blobs(std::size_t classes, std::size_t n_per_class,
                  const std::vector<std::vector<double>>& centers, double sigma,
                  std::uint64_t seed) {
    if (classes == 0 || centers.size() != classes)
        throw std::invalid_argument("gen_blobs: one center per class required");
    const std::size_t dim = centers.front().size();
    for (const auto& c : centers)
        if (c.size() != dim) throw std::invalid_argument("gen_blobs: ragged centers");
    Rng rng = Rng::substream(seed, "blobs");
    Dataset d;
    d.name = "blobs";
    d.seed = seed;
    d.params = "classes=" + std::to_string(classes) + " n_per_class=" +
               std::to_string(n_per_class) + " sigma=" + std::to_string(sigma);
    d.X = Tensor(classes * n_per_class, dim);
    d.y.resize(classes * n_per_class);
    d.split.assign(classes * n_per_class, Split::train);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const std::size_t r = c * n_per_class + i;
            for (std::size_t j = 0; j < dim; ++j)
                d.X.at(r, j) = centers[c][j] + sigma * rng.normal();
            d.y[r] = static_cast<int>(c);
        }
    }
    return d;
}

Dataset gen_toy1d(std::uint64_t seed) {
    // two interleaved segments per class: the decision region for either
    // class cannot be a single interval
    struct Seg {
        double lo, hi;
        int label;
    };
    const Seg segs[] = {{-3.0, -2.0, 0}, {-1.0, 0.0, 1}, {0.0, 1.0, 0}, {2.0, 3.0, 1}};
    const std::size_t per_seg = 120;
    Rng rng = Rng::substream(seed, "toy1d");
    Dataset d;
    d.name = "toy1d";
    d.seed = seed;
    d.params = "per_segment=" + std::to_string(per_seg);
    d.X = Tensor(4 * per_seg, 1);
    d.y.resize(4 * per_seg);
    d.split.assign(4 * per_seg, Split::train);
    for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t i = 0; i < per_seg; ++i) {
            const std::size_t r = s * per_seg + i;
            d.X.at(r, 0) = rng.uniform(segs[s].lo, segs[s].hi);
            d.y[r] = segs[s].label;
        }
    }
    return d;
}

double corruption_sigma(int severity) {
    static const double ladder[] = {0.0, 0.02, 0.05, 0.1, 0.2, 0.4};
    if (severity < 0 || severity > 5)
        throw std::invalid_argument("corruption_sigma: severity must be in [0, 5]");
    return ladder[severity];
}

Dataset corrupt(const Dataset& d, const CorruptionSpec& spec, std::uint64_t seed) {
    const double sigma = corruption_sigma(spec.severity);
    Rng rng = Rng::substream(seed, "corrupt");
    Dataset out = d;
    out.X = d.X.detach_copy();
    out.params += " corrupted(severity=" + std::to_string(spec.severity) + ")";
    for (double& v : out.X.data()) v += sigma * rng.normal();
    for (std::size_t i = 0; i < out.split.size(); ++i)
        if (out.y[i] != kOodLabel) out.split[i] = Split::shifted;
    return out;
}

namespace {

std::uint32_t read_u32_be(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (f.gcount() != 4)
        throw FormatError(path + ": truncated at byte " + std::to_string(offset));
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t limit) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError(images_path + ": cannot open");
    const std::uint32_t img_magic = read_u32_be(imgs, images_path, 0);
    if (img_magic != 0x00000803u)
        throw FormatError(images_path + ": bad magic at byte 0, expected 0x00000803");
    const std::uint32_t n_img = read_u32_be(imgs, images_path, 4);
    const std::uint32_t rows = read_u32_be(imgs, images_path, 8);
    const std::uint32_t cols = read_u32_be(imgs, images_path, 12);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw FormatError(labels_path + ": cannot open");
    const std::uint32_t lab_magic = read_u32_be(labs, labels_path, 0);
    if (lab_magic != 0x00000801u)
        throw FormatError(labels_path + ": bad magic at byte 0, expected 0x00000801");
    const std::uint32_t n_lab = read_u32_be(labs, labels_path, 4);
    if (n_img != n_lab)
        throw FormatError(images_path + ": image count " + std::to_string(n_img) +
                          " != label count " + std::to_string(n_lab) + " at byte 4");

    const std::size_t take = limit == 0 ? n_img : std::min<std::size_t>(limit, n_img);
    const std::size_t pix = static_cast<std::size_t>(rows) * cols;
    Dataset d;
    d.name = "idx";
    d.params = images_path;
    d.X = Tensor(take, pix);
    d.y.resize(take);
    d.split.assign(take, Split::train);
    std::vector<unsigned char> buf(pix);
    for (std::size_t i = 0; i < take; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
        if (imgs.gcount() != static_cast<std::streamsize>(pix))
            throw FormatError(images_path + ": truncated at byte " +
                              std::to_string(16 + i * pix));
        for (std::size_t j = 0; j < pix; ++j)
            d.X.at(i, j) = static_cast<double>(buf[j]) / 255.0;
        unsigned char lab;
        labs.read(reinterpret_cast<char*>(&lab), 1);
        if (labs.gcount() != 1)
            throw FormatError(labels_path + ": truncated at byte " + std::to_string(8 + i));
        d.y[i] = static_cast<int>(lab);
    }
    return d;
}

void export_csv(const Dataset& d, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError(path + ": cannot open for writing");
    for (std::size_t j = 0; j < d.dim(); ++j) f << "x" << j << ",";
    f << "y,split\n";
    char buf[64];
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", d.X.at(i, j));
            f << buf << ",";
        }
        f << d.y[i] << "," << split_name(d.split[i]) << "\n";
    }
}

void retag_validation(Dataset& d, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("retag_validation: fraction must be in (0, 1)");
    Rng rng = Rng::substream(seed, "val_split");
    const std::size_t classes = d.classes();
    for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.split[i] == Split::train && d.y[i] == static_cast<int>(c)) rows.push_back(i);
        rng.shuffle(rows);
        const std::size_t take = static_cast<std::size_t>(
            std::ceil(fraction * static_cast<double>(rows.size())));
        for (std::size_t k = 0; k < take && k < rows.size(); ++k)
            d.split[rows[k]] = Split::val;
    }
}

}  // namespace gem
