#include "sabnn/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "sabnn/error.hpp"

namespace sabnn {

namespace {

// shortest decimal that round-trips the double
std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, int row) {
    double v = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw Error("load_csv: non-numeric cell '" + cell + "' at row " + std::to_string(row));
    }
    if (!std::isfinite(v)) {
        throw Error("load_csv: non-finite value at row " + std::to_string(row));
    }
    return v;
}

}  // namespace

void Dataset::validate() const {
    check(features.rows() == labels.size(), "Dataset: feature/label count mismatch");
    check(n_classes >= 1, "Dataset: need at least one class");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        check(labels(i) >= 0 && labels(i) < n_classes, "Dataset: label out of range");
    }
    check(features.allFinite(), "Dataset: non-finite feature");
}

Dataset gen_two_moons(int n, double noise_std, std::uint64_t seed) {
    check(n >= 2 && n % 2 == 0, "gen_two_moons: n must be even and >= 2");
    check(noise_std >= 0.0, "gen_two_moons: noise_std must be nonnegative");
    Rng rng(seed);
    const int half = n / 2;
    Dataset ds;
    ds.features.resize(n, 2);
    ds.labels.resize(n);
    ds.n_classes = 2;
    for (int i = 0; i < half; ++i) {
        const double t = std::numbers::pi * rng.uniform();
        ds.features(i, 0) = std::cos(t) + noise_std * rng.normal();
        ds.features(i, 1) = std::sin(t) + noise_std * rng.normal();
        ds.labels(i) = 0;
    }
    for (int i = 0; i < half; ++i) {
        const double t = std::numbers::pi * rng.uniform();
        ds.features(half + i, 0) = 1.0 - std::cos(t) + noise_std * rng.normal();
        ds.features(half + i, 1) = -0.5 - std::sin(t) + noise_std * rng.normal();
        ds.labels(half + i) = 1;
    }
    return ds;
}

Dataset gen_gaussian_blobs(int n, const std::vector<Vec>& centers, double spread,
                           std::uint64_t seed) {
    check(centers.size() >= 2, "gen_gaussian_blobs: need at least 2 centers");
    check(spread >= 0.0, "gen_gaussian_blobs: spread must be nonnegative");
    const int c = static_cast<int>(centers.size());
    check(n >= c && n % c == 0, "gen_gaussian_blobs: n must be a positive multiple of the center count");
    const Eigen::Index d = centers.front().size();
    for (const Vec& ctr : centers) check(ctr.size() == d, "gen_gaussian_blobs: center dims differ");
    Rng rng(seed);
    Dataset ds;
    ds.features.resize(n, d);
    ds.labels.resize(n);
    ds.n_classes = c;
    const int per = n / c;
    int row = 0;
    for (int k = 0; k < c; ++k) {
        for (int i = 0; i < per; ++i, ++row) {
            for (Eigen::Index j = 0; j < d; ++j) {
                ds.features(row, j) = centers[static_cast<std::size_t>(k)](j) + spread * rng.normal();
            }
            ds.labels(row) = k;
        }
    }
    return ds;
}

std::string dataset_to_csv(const Dataset& ds, bool with_header) {
    std::ostringstream os;
    if (with_header) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) os << "x" << j << ",";
        os << "label\n";
    }
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) os << format_double(ds.features(i, j)) << ",";
        os << ds.labels(i) << "\n";
    }
    return os.str();
}

void save_csv(const std::string& path, const Dataset& ds, bool with_header) {
    std::ofstream out(path, std::ios::binary);
    check(static_cast<bool>(out), "save_csv: cannot open " + path);
    out << dataset_to_csv(ds, with_header);
}

Dataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "load_csv: cannot open " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int row_no = 0;
    Eigen::Index width = -1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (has_header && row_no == 1) continue;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        check(cells.size() >= 2, "load_csv: row " + std::to_string(row_no) + " has too few columns");
        if (width < 0) width = static_cast<Eigen::Index>(cells.size()) - 1;
        if (static_cast<Eigen::Index>(cells.size()) - 1 != width) {
            throw Error("load_csv: ragged row at row " + std::to_string(row_no));
        }
        std::vector<double> feat;
        for (Eigen::Index j = 0; j < width; ++j) {
            feat.push_back(parse_double(cells[static_cast<std::size_t>(j)], row_no));
        }
        const std::string& lab = cells.back();
        int y = 0;
        auto res = std::from_chars(lab.data(), lab.data() + lab.size(), y);
        if (res.ec != std::errc{} || res.ptr != lab.data() + lab.size() || y < 0) {
            throw Error("load_csv: bad label '" + lab + "' at row " + std::to_string(row_no));
        }
        rows.push_back(std::move(feat));
        labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    check(!rows.empty(), "load_csv: no data rows in " + path);
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), width);
    ds.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Eigen::Index j = 0; j < width; ++j) {
            ds.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
        }
        ds.labels(static_cast<Eigen::Index>(i)) = labels[i];
    }
    ds.n_classes = max_label + 1;
    ds.validate();
    return ds;
}

std::pair<Dataset, Dataset> split_normalize(const Dataset& ds, double train_fraction,
                                            std::uint64_t seed) {
    check(train_fraction > 0.0 && train_fraction < 1.0,
          "split_normalize: train_fraction must be in (0, 1)");
    const Eigen::Index n = ds.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    const auto n_train = static_cast<Eigen::Index>(
        std::llround(train_fraction * static_cast<double>(n)));
    check(n_train >= 1 && n_train <= n - 1, "split_normalize: a split side is empty");

    auto take = [&](Eigen::Index from, Eigen::Index count) {
        Dataset out;
        out.features.resize(count, ds.dim());
        out.labels.resize(count);
        out.n_classes = ds.n_classes;
        for (Eigen::Index i = 0; i < count; ++i) {
            out.features.row(i) = ds.features.row(idx[static_cast<std::size_t>(from + i)]);
            out.labels(i) = ds.labels(idx[static_cast<std::size_t>(from + i)]);
        }
        return out;
    };
    Dataset train = take(0, n_train);
    Dataset test = take(n_train, n - n_train);

    Normalization norm;
    norm.mean = train.features.colwise().mean().transpose();
    Vec var = (train.features.rowwise() - norm.mean.transpose())
                  .array().square().colwise().mean().transpose();
    norm.std = var.array().sqrt().max(1e-8).matrix();
    auto apply = [&](Dataset& d) {
        for (Eigen::Index j = 0; j < d.features.cols(); ++j) {
            d.features.col(j) = (d.features.col(j).array() - norm.mean(j)) / norm.std(j);
        }
        d.normalization = norm;
    };
    apply(train);
    apply(test);
    return {train, test};
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
    return fnv1a64(dataset_to_csv(ds, false));
}

}  // namespace sabnn
