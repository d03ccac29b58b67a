#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gnplan/errors.hpp"
#include "gnplan/matrix.hpp"
#include "gnplan/rng.hpp"

namespace gnplan {

/// Labeled feature matrix. Features are row vectors, one sample per row.
struct Dataset {
    Matrix features;         // N x d
    std::vector<int> labels; // length N, values in [0, classes)
    int classes = 0;

    std::size_t size() const { return labels.size(); }
};

namespace detail {

inline std::uint32_t read_u32_be(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(path + ": truncated at byte " + std::to_string(offset) +
                          " (expected 4-byte big-endian field)");
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace detail

/// Reads an IDX image/label pair (the MNIST container format): images with
/// big-endian magic 0x00000803 and dims N x rows x cols, labels with magic
/// 0x00000801 and N bytes. Pixels are scaled to [0, 1] by /255 and flattened
/// row-major. Labels must be < classes.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int classes = 10) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError(images_path + ": cannot open");
    const std::uint32_t img_magic = detail::read_u32_be(img, images_path, 0);
    if (img_magic != 0x00000803u) {
        throw FormatError(images_path + ": bad magic at byte 0 (got 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%08x", img_magic);
            return std::string(buf);
        }() + ", expected 0x00000803)");
    }
    const std::uint32_t n_images = detail::read_u32_be(img, images_path, 4);
    const std::uint32_t n_rows = detail::read_u32_be(img, images_path, 8);
    const std::uint32_t n_cols = detail::read_u32_be(img, images_path, 12);
    if (n_images == 0 || n_rows == 0 || n_cols == 0) {
        throw FormatError(images_path + ": empty image set");
    }

    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw FormatError(labels_path + ": cannot open");
    const std::uint32_t lbl_magic = detail::read_u32_be(lbl, labels_path, 0);
    if (lbl_magic != 0x00000801u) {
        throw FormatError(labels_path + ": bad magic at byte 0 (expected 0x00000801)");
    }
    const std::uint32_t n_labels = detail::read_u32_be(lbl, labels_path, 4);
    if (n_labels != n_images) {
        throw FormatError(labels_path + ": item count " + std::to_string(n_labels) +
                          " does not match image count " + std::to_string(n_images));
    }

    const std::size_t dim = std::size_t(n_rows) * n_cols;
    Dataset ds;
    ds.classes = classes;
    ds.features = Matrix(n_images, dim);
    ds.labels.resize(n_images);

    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim))) {
            throw FormatError(images_path + ": truncated at byte " +
                              std::to_string(16 + std::size_t(i) * dim) + " (image " +
                              std::to_string(i) + ")");
        }
        double* row = ds.features.data() + std::size_t(i) * dim;
        for (std::size_t j = 0; j < dim; ++j) row[j] = buf[j] / 255.0;
    }
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        unsigned char v;
        if (!lbl.read(reinterpret_cast<char*>(&v), 1)) {
            throw FormatError(labels_path + ": truncated at byte " + std::to_string(8 + i));
        }
        if (v >= classes) {
            throw FormatError(labels_path + ": label " + std::to_string(int(v)) + " at byte " +
                              std::to_string(8 + i) + " out of range [0, " +
                              std::to_string(classes) + ")");
        }
        ds.labels[i] = v;
    }
    return ds;
}

/// Gaussian blob classification task: class c is centered at
/// separation * u_c for a random unit direction u_c, with unit covariance.
/// Samples are shuffled; identical arguments reproduce identical datasets.
/// Centers depend only on the seed, so a disjoint split (e.g. a test set)
/// comes from the same seed with a different sample_stream.
inline Dataset synth_dataset(int classes, std::size_t per_class, std::size_t d, double separation,
                             std::uint64_t seed, std::uint64_t sample_stream = 1) {
    if (classes <= 0 || per_class == 0 || d == 0) {
        throw DomainError("synth_dataset: classes, per_class and d must be positive");
    }
    if (separation < 0.0) throw DomainError("synth_dataset: separation must be non-negative");

    RngStream centers_rng(seed, 0);
    Matrix centers(classes, d);
    for (int c = 0; c < classes; ++c) {
        double norm2 = 0.0;
        double* row = centers.data() + std::size_t(c) * d;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = centers_rng.next_standard_normal();
            norm2 += row[j] * row[j];
        }
        const double scale = separation / std::sqrt(norm2);
        for (std::size_t j = 0; j < d; ++j) row[j] *= scale;
    }

    const std::size_t n = std::size_t(classes) * per_class;
    Dataset ds;
    ds.classes = classes;
    ds.features = Matrix(n, d);
    ds.labels.resize(n);
    RngStream noise_rng(seed, 2 * sample_stream + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i / per_class);
        ds.labels[i] = c;
        double* row = ds.features.data() + i * d;
        const double* center = centers.data() + std::size_t(c) * d;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = center[j] + noise_rng.next_standard_normal();
        }
    }

    // Fisher-Yates with the dedicated shuffle stream.
    RngStream shuffle_rng(seed, 2 * sample_stream + 2);
    std::vector<double> tmp(d);
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(shuffle_rng.next_uniform() * double(i + 1));
        if (j == i) continue;
        double* ri = ds.features.data() + i * d;
        double* rj = ds.features.data() + j * d;
        std::copy(ri, ri + d, tmp.begin());
        std::copy(rj, rj + d, ri);
        std::copy(tmp.begin(), tmp.end(), rj);
        std::swap(ds.labels[i], ds.labels[j]);
    }
    return ds;
}

} // namespace gnplan
