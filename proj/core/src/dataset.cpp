#include "dtmix/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "dtmix/pgm.hpp"
#include "dtmix/rng.hpp"

namespace dtmix {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

Eigen::LLT<Eigen::MatrixXd> chol_or_throw(const Eigen::MatrixXd& gamma) {
    Eigen::LLT<Eigen::MatrixXd> llt(gamma);
    if (llt.info() != Eigen::Success) {
        throw SingularCovariance("deformation covariance is not positive definite");
    }
    return llt;
}

Eigen::VectorXd draw_beta(const Eigen::LLT<Eigen::MatrixXd>& llt, const Substream& rng) {
    const Eigen::Index d = llt.matrixL().rows();
    Eigen::VectorXd z(d);
    for (Eigen::Index e = 0; e < d; ++e) {
        z(e) = rng.normal(static_cast<std::uint32_t>(e), 0, 0);
    }
    return llt.matrixL() * z;
}

}  // namespace

Manifest Manifest::read(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw MissingFile("cannot open manifest: " + file.string());

    Manifest m;
    bool in_header = true;
    std::string line;
    while (std::getline(is, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (in_header && eq != std::string::npos) {
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key == "version") {
                if (value != "1") throw ParseError("unsupported manifest version: " + value);
            } else if (key == "width") {
                m.width = std::stoi(value);
            } else if (key == "height") {
                m.height = std::stoi(value);
            } else if (key == "normalization") {
                m.normalization = value;
            } else {
                throw ParseError("unknown manifest key: " + key);
            }
            continue;
        }
        in_header = false;
        m.paths.emplace_back(t);
    }
    if (m.width < 1 || m.height < 1) throw ParseError("manifest missing width/height");
    if (m.normalization != "pgm8" && m.normalization != "raw") {
        throw ParseError("manifest normalization must be 'pgm8' or 'raw'");
    }
    if (m.paths.empty()) throw ParseError("manifest lists no images");
    return m;
}

void Manifest::write(const std::filesystem::path& file) const {
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + file.string());
    os << "version = 1\n";
    os << "width = " << width << "\n";
    os << "height = " << height << "\n";
    os << "normalization = " << normalization << "\n";
    for (const auto& p : paths) os << p.generic_string() << "\n";
    if (!os) throw Error("write failed: " + file.string());
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const Box& photometric_box) {
    const Manifest m = Manifest::read(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();

    Dataset data;
    data.grid = PixelGrid::make(m.width, m.height, photometric_box);
    data.images.reserve(m.paths.size());

    for (const auto& rel : m.paths) {
        const std::filesystem::path file = rel.is_absolute() ? rel : base / rel;
        if (!std::filesystem::exists(file)) {
            throw MissingFile("image not found: " + file.string());
        }
        if (m.normalization == "pgm8") {
            const Image8 img = read_pgm(file);
            if (img.width != m.width || img.height != m.height) {
                throw DimensionMismatch("image size differs from manifest: " + file.string());
            }
            Eigen::VectorXd v(data.grid.size());
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                v(i) = img.pixels[static_cast<size_t>(i)] * (2.0 / 255.0);
            }
            data.images.push_back(std::move(v));
        } else {
            int w = 0, h = 0;
            Eigen::VectorXd v = read_gf64(file, w, h);
            if (w != m.width || h != m.height) {
                throw DimensionMismatch("image size differs from manifest: " + file.string());
            }
            data.images.push_back(std::move(v));
        }
    }
    return data;
}

Dataset generate_synthetic(const ModelParams& eta_true, int n, const Geometry& geom,
                           std::uint64_t seed) {
    // The forward sampler tolerates weights on the simplex boundary, unlike
    // the estimation-side validation.
    if (eta_true.rho.size() != eta_true.count() || eta_true.rho.minCoeff() < 0.0 ||
        std::abs(eta_true.rho.sum() - 1.0) > 1e-12) {
        throw Error("generate_synthetic: weights must be non-negative and sum to 1");
    }
    for (const auto& c : eta_true.components) {
        if (!(c.sigma2 > 0)) throw NonPositiveVariance("generate_synthetic: sigma2 <= 0");
    }
    const int tau_m = eta_true.count();

    std::vector<Eigen::LLT<Eigen::MatrixXd>> chols;
    chols.reserve(tau_m);
    for (const auto& c : eta_true.components) chols.push_back(chol_or_throw(c.gamma_g));

    Dataset data;
    data.grid = geom.pixels();
    data.images.resize(n);
    HiddenState hidden;
    hidden.beta.resize(n);
    hidden.tau.resize(n);

    for (int i = 0; i < n; ++i) {
        const std::uint32_t img = static_cast<std::uint32_t>(i);
        const Substream label_rng(seed, 0, img, RngPurpose::SynthLabel, 0);
        const double u = label_rng.uniform(0, 0, 0);
        int tau = tau_m - 1;
        double cum = 0.0;
        for (int t = 0; t < tau_m; ++t) {
            cum += eta_true.rho(t);
            if (u < cum) {
                tau = t;
                break;
            }
        }

        const Substream beta_rng(seed, 0, img, RngPurpose::SynthBeta, 0);
        const Eigen::VectorXd beta = draw_beta(chols[tau], beta_rng);

        Eigen::VectorXd y = geom.deformed_template(beta, eta_true.components[tau].alpha);
        const double sd = std::sqrt(eta_true.components[tau].sigma2);
        const Substream noise_rng(seed, 0, img, RngPurpose::SynthNoise, 0);
        for (Eigen::Index p = 0; p < y.size(); ++p) {
            y(p) += sd * noise_rng.normal(static_cast<std::uint32_t>(p), 0, 0);
        }

        data.images[i] = std::move(y);
        hidden.beta[i] = beta;
        hidden.tau[i] = tau;
    }

    data.truth_hidden = std::move(hidden);
    data.truth_params = eta_true;
    return data;
}

Eigen::VectorXd render_template(const ComponentParams& comp, const Geometry& geom) {
    if (comp.alpha.size() != geom.k_p()) {
        throw DimensionMismatch("render_template: alpha length != k_p");
    }
    return geom.design0() * comp.alpha;
}

std::vector<SamplePair> draw_samples(const ModelParams& eta, int count, int template_comp,
                                     int cov_comp, const Geometry& geom, std::uint64_t seed) {
    if (template_comp < 0 || template_comp >= eta.count() || cov_comp < 0 ||
        cov_comp >= eta.count()) {
        throw Error("draw_samples: component index out of range");
    }
    const auto llt = chol_or_throw(eta.components[cov_comp].gamma_g);
    const Eigen::VectorXd& alpha = eta.components[template_comp].alpha;

    std::vector<SamplePair> out;
    out.reserve(count);
    for (int d = 0; d < count; ++d) {
        const Substream rng(seed, 0, static_cast<std::uint32_t>(d), RngPurpose::SampleBeta, 0);
        SamplePair p;
        p.beta = draw_beta(llt, rng);
        p.plus = geom.deformed_template(p.beta, alpha);
        p.minus = geom.deformed_template(-p.beta, alpha);
        out.push_back(std::move(p));
    }
    return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    Manifest m;
    m.width = data.grid.width;
    m.height = data.grid.height;
    m.normalization = "raw";
    char name[64];
    for (int i = 0; i < data.size(); ++i) {
        std::snprintf(name, sizeof(name), "images/img_%05d.gf64", i);
        write_gf64(dir / name, data.grid.width, data.grid.height, data.images[i]);
        m.paths.emplace_back(name);
    }
    m.write(dir / "manifest.txt");
}

}  // namespace dtmix
