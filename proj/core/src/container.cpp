#include "dtmix/container.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dtmix {

namespace {

constexpr const char* kMagic = "dtmix1";

std::string format_num(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void put_geometry(Container& c, const Geometry& geom) {
    c.set_int("width", geom.pixels().width);
    c.set_int("height", geom.pixels().height);
    c.set_int("kp_x", geom.photo_landmarks().nx);
    c.set_int("kp_y", geom.photo_landmarks().ny);
    c.set_int("kg_x", geom.geo_landmarks().nx);
    c.set_int("kg_y", geom.geo_landmarks().ny);
    const KernelConfig& k = geom.kernel();
    c.set_num("sigma_p", k.sigma_p);
    c.set_num("sigma_g", k.sigma_g);
    c.set_num("pbox_x0", k.photometric_box.x0);
    c.set_num("pbox_y0", k.photometric_box.y0);
    c.set_num("pbox_x1", k.photometric_box.x1);
    c.set_num("pbox_y1", k.photometric_box.y1);
    c.set_num("gbox_x0", k.geometric_box.x0);
    c.set_num("gbox_y0", k.geometric_box.y0);
    c.set_num("gbox_x1", k.geometric_box.x1);
    c.set_num("gbox_y1", k.geometric_box.y1);
}

Geometry get_geometry(const Container& c) {
    KernelConfig k;
    k.sigma_p = c.num("sigma_p");
    k.sigma_g = c.num("sigma_g");
    k.photometric_box = {c.num("pbox_x0"), c.num("pbox_y0"), c.num("pbox_x1"), c.num("pbox_y1")};
    k.geometric_box = {c.num("gbox_x0"), c.num("gbox_y0"), c.num("gbox_x1"), c.num("gbox_y1")};
    return Geometry::make(static_cast<int>(c.integer("width")),
                          static_cast<int>(c.integer("height")),
                          static_cast<int>(c.integer("kp_x")), static_cast<int>(c.integer("kp_y")),
                          static_cast<int>(c.integer("kg_x")), static_cast<int>(c.integer("kg_y")),
                          k);
}

void put_model(Container& c, const ModelParams& eta, const Hyperparams& hyper,
               const Geometry& geom) {
    put_geometry(c, geom);
    c.set_int("version", 1);
    c.set_int("tau_m", hyper.tau_m);
    c.set_int("pixels", geom.pixel_count());
    c.set_int("k_p", geom.k_p());
    c.set_int("k_g", geom.k_g());
    c.set_num("a_p", hyper.a_p);
    c.set_num("a_g", hyper.a_g);
    c.set_num("a_rho", hyper.a_rho);
    c.set_num("sigma0_2", hyper.sigma0_2);
    c.set_num("R", hyper.R);
    c.set_int("sigma_fixed", hyper.sigma_fixed ? 1 : 0);

    c.add("mu_p", hyper.mu_p);
    c.add("sigma_p_mat", hyper.sigma_p_mat);
    c.add("sigma_p_inv", hyper.sigma_p_inv);
    c.add("sigma_g_mat", hyper.sigma_g_mat);
    c.add("rho", eta.rho);
    Eigen::VectorXd sigma2(eta.count());
    for (int t = 0; t < eta.count(); ++t) sigma2(t) = eta.components[t].sigma2;
    c.add("sigma2", sigma2);
    for (int t = 0; t < eta.count(); ++t) {
        c.add("alpha_" + std::to_string(t), eta.components[t].alpha);
        c.add("gamma_" + std::to_string(t), eta.components[t].gamma_g);
    }
}

void get_model(const Container& c, ModelParams& eta, Hyperparams& hyper, Geometry& geom) {
    geom = get_geometry(c);
    hyper.tau_m = static_cast<int>(c.integer("tau_m"));
    hyper.a_p = c.num("a_p");
    hyper.a_g = c.num("a_g");
    hyper.a_rho = c.num("a_rho");
    hyper.sigma0_2 = c.num("sigma0_2");
    hyper.R = c.num("R");
    hyper.sigma_fixed = c.integer("sigma_fixed") != 0;
    hyper.mu_p = c.block("mu_p");
    hyper.sigma_p_mat = c.block("sigma_p_mat");
    hyper.sigma_p_inv = c.block("sigma_p_inv");
    hyper.sigma_g_mat = c.block("sigma_g_mat");

    eta.rho = c.block("rho");
    const Eigen::VectorXd sigma2 = c.block("sigma2");
    eta.components.resize(hyper.tau_m);
    for (int t = 0; t < hyper.tau_m; ++t) {
        eta.components[t].alpha = c.block("alpha_" + std::to_string(t));
        eta.components[t].gamma_g = c.block("gamma_" + std::to_string(t));
        eta.components[t].sigma2 = sigma2(t);
    }
}

}  // namespace

void Container::add(const std::string& name, const Eigen::MatrixXd& m) {
    blocks_.emplace_back(name, m);
}

bool Container::has(const std::string& name) const {
    for (const auto& [n, m] : blocks_) {
        if (n == name) return true;
    }
    return false;
}

const Eigen::MatrixXd& Container::block(const std::string& name) const {
    for (const auto& [n, m] : blocks_) {
        if (n == name) return m;
    }
    throw ParseError("container block not found: " + name);
}

void Container::set_num(const std::string& key, double value) { meta[key] = format_num(value); }

void Container::set_int(const std::string& key, long long value) {
    meta[key] = std::to_string(value);
}

double Container::num(const std::string& key) const { return std::stod(str(key)); }

long long Container::integer(const std::string& key) const { return std::stoll(str(key)); }

const std::string& Container::str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("container key not found: " + key);
    return it->second;
}

void Container::write(const std::filesystem::path& path) const {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open for writing: " + tmp.string());
        os << kMagic << "\n";
        for (const auto& [k, v] : meta) os << k << " = " << v << "\n";
        for (const auto& [name, m] : blocks_) {
            os << "block " << name << " " << m.rows() << " " << m.cols() << "\n";
        }
        os << "data\n";
        for (const auto& [name, m] : blocks_) {
            os.write(reinterpret_cast<const char*>(m.data()),
                     static_cast<std::streamsize>(sizeof(double) * m.size()));
        }
        if (!os) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Container Container::read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFile("cannot open: " + path.string());

    std::string line;
    if (!std::getline(is, line) || line != kMagic) {
        throw ParseError("not a dtmix container: " + path.string());
    }

    Container c;
    std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> layout;
    while (std::getline(is, line)) {
        if (line == "data") break;
        if (line.rfind("block ", 0) == 0) {
            std::istringstream ls(line.substr(6));
            std::string name;
            Eigen::Index rows = 0, cols = 0;
            if (!(ls >> name >> rows >> cols)) {
                throw ParseError("malformed block line: " + line);
            }
            layout.emplace_back(name, rows, cols);
            continue;
        }
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw ParseError("malformed header line: " + line);
        c.meta[line.substr(0, eq)] = line.substr(eq + 3);
    }

    for (const auto& [name, rows, cols] : layout) {
        Eigen::MatrixXd m(rows, cols);
        is.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!is) throw ParseError("truncated container data: " + path.string());
        c.blocks_.emplace_back(name, std::move(m));
    }
    return c;
}

void save_model(const std::filesystem::path& path, const ModelParams& eta,
                const Hyperparams& hyper, const Geometry& geom) {
    Container c;
    c.meta["kind"] = "model";
    put_model(c, eta, hyper, geom);
    c.write(path);
}

LoadedModel load_model(const std::filesystem::path& path) {
    const Container c = Container::read(path);
    if (c.str("kind") != "model" && c.str("kind") != "truth") {
        throw ParseError("container is not a model checkpoint: " + path.string());
    }
    LoadedModel out{ModelParams{}, Hyperparams{}, Geometry::make(1, 1, 1, 1, 1, 1)};
    get_model(c, out.eta, out.hyper, out.geom);
    return out;
}

void save_truth(const std::filesystem::path& path, const ModelParams& eta,
                const Hyperparams& hyper, const Geometry& geom, const HiddenState& hidden) {
    Container c;
    c.meta["kind"] = "truth";
    put_model(c, eta, hyper, geom);
    c.set_int("n", hidden.size());
    Eigen::VectorXd labels(hidden.size());
    for (int i = 0; i < hidden.size(); ++i) labels(i) = hidden.tau[i];
    Eigen::MatrixXd betas(geom.beta_dim(), hidden.size());
    for (int i = 0; i < hidden.size(); ++i) betas.col(i) = hidden.beta[i];
    c.add("labels", labels);
    c.add("betas", betas);
    c.write(path);
}

LoadedTruth load_truth(const std::filesystem::path& path) {
    const Container c = Container::read(path);
    if (c.str("kind") != "truth") {
        throw ParseError("container is not a ground-truth sidecar: " + path.string());
    }
    LoadedTruth out{ModelParams{}, Hyperparams{}, Geometry::make(1, 1, 1, 1, 1, 1), HiddenState{}};
    get_model(c, out.eta, out.hyper, out.geom);
    const Eigen::VectorXd labels = c.block("labels");
    const Eigen::MatrixXd betas = c.block("betas");
    const int n = static_cast<int>(c.integer("n"));
    out.hidden.tau.resize(n);
    out.hidden.beta.resize(n);
    for (int i = 0; i < n; ++i) {
        out.hidden.tau[i] = static_cast<int>(labels(i));
        out.hidden.beta[i] = betas.col(i);
    }
    return out;
}

}  // namespace dtmix
