// dtmix: estimate mixtures of deformable template models from grayscale
// images, sample from fitted models, and render diagnostics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dtmix/container.hpp"
#include "dtmix/dataset.hpp"
#include "dtmix/pgm.hpp"
#include "dtmix/saem.hpp"

namespace fs = std::filesystem;
using namespace dtmix;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct GeomOpts {
    int kp = 5;
    int kg = 3;
    double sigma_p = 0.2;
    double sigma_g = 0.12;
    double pbox = 1.5;  // photometric half-width
    double gbox = 1.0;  // geometric half-width
};

struct HyperOpts {
    int components = 2;
    double a_p = 3.0;
    double a_g = 0.0;  // 0 = 4*k_g + 1
    double a_rho = 1.0;
    double sigma0_2 = 1.0;
    double big_r = 1e6;
};

void add_geom_options(CLI::App* cmd, GeomOpts& g) {
    cmd->add_option("--kp", g.kp, "Photometric landmarks per axis")->capture_default_str();
    cmd->add_option("--kg", g.kg, "Geometric landmarks per axis")->capture_default_str();
    cmd->add_option("--sigma-p", g.sigma_p, "Photometric kernel bandwidth")
        ->capture_default_str();
    cmd->add_option("--sigma-g", g.sigma_g, "Geometric kernel bandwidth")->capture_default_str();
    cmd->add_option("--pbox", g.pbox, "Photometric box half-width")->capture_default_str();
    cmd->add_option("--gbox", g.gbox, "Geometric box half-width")->capture_default_str();
}

void add_hyper_options(CLI::App* cmd, HyperOpts& h) {
    cmd->add_option("--components", h.components, "Number of mixture components")
        ->capture_default_str();
    cmd->add_option("--ap", h.a_p, "Noise-variance prior weight a_p")->capture_default_str();
    cmd->add_option("--ag", h.a_g, "Deformation prior weight a_g (0 = minimum legal)")
        ->capture_default_str();
    cmd->add_option("--arho", h.a_rho, "Mixture-weight prior exponent a_rho")
        ->capture_default_str();
    cmd->add_option("--sigma0", h.sigma0_2, "Noise-variance prior scale sigma0^2")
        ->capture_default_str();
    cmd->add_option("--R", h.big_r, "Template-norm validation bound")->capture_default_str();
}

Geometry make_geometry(int width, int height, const GeomOpts& g) {
    KernelConfig kc;
    kc.sigma_p = g.sigma_p;
    kc.sigma_g = g.sigma_g;
    kc.photometric_box = {-g.pbox, -g.pbox, g.pbox, g.pbox};
    kc.geometric_box = {-g.gbox, -g.gbox, g.gbox, g.gbox};
    return Geometry::make(width, height, g.kp, g.kp, g.kg, g.kg, kc);
}

Hyperparams make_hyper(const Geometry& geom, const HyperOpts& h, bool sigma_fixed) {
    Hyperparams hp = Hyperparams::standard(geom, h.components);
    hp.a_p = h.a_p;
    if (h.a_g > 0) hp.a_g = h.a_g;
    hp.a_rho = h.a_rho;
    hp.sigma0_2 = h.sigma0_2;
    hp.R = h.big_r;
    hp.sigma_fixed = sigma_fixed;
    hp.validate(geom.k_p(), geom.k_g());
    return hp;
}

void write_template_images(const ModelParams& eta, const Geometry& geom, const fs::path& dir) {
    char name[64];
    for (int t = 0; t < eta.count(); ++t) {
        std::snprintf(name, sizeof(name), "template_%d.pgm", t);
        write_pgm(dir / name, geom.pixels().width, geom.pixels().height,
                  render_template(eta.components[t], geom));
    }
}

// Built-in synthetic truth: alternating horizontal and vertical bar
// templates with isotropic deformation covariance.
ModelParams bars_truth(const Geometry& geom, int components, double deform_sd, double noise_var,
                       double rho0) {
    ModelParams eta;
    eta.components.resize(components);
    const int nx = geom.photo_landmarks().nx;
    const int ny = geom.photo_landmarks().ny;
    for (int t = 0; t < components; ++t) {
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(geom.k_p());
        if (t % 2 == 0) {
            const int row = (ny / 2 + t / 2) % ny;
            for (int ix = 0; ix < nx; ++ix)
                alpha(static_cast<Eigen::Index>(row) * nx + ix) = 1.2;
        } else {
            const int col = (nx / 2 + t / 2) % nx;
            for (int iy = 0; iy < ny; ++iy)
                alpha(static_cast<Eigen::Index>(iy) * nx + col) = 1.2;
        }
        eta.components[t].alpha = alpha;
        eta.components[t].sigma2 = noise_var;
        eta.components[t].gamma_g =
            deform_sd * deform_sd *
            Eigen::MatrixXd::Identity(geom.beta_dim(), geom.beta_dim());
    }
    if (components == 2) {
        eta.rho = Eigen::VectorXd(2);
        eta.rho << rho0, 1.0 - rho0;
    } else {
        eta.rho = Eigen::VectorXd::Constant(components, 1.0 / components);
    }
    return eta;
}

int cmd_train(const fs::path& manifest, const fs::path& out, const GeomOpts& gopts,
              const HyperOpts& hopts, SaemConfig cfg, int checkpoint_every,
              const std::string& init_params) {
    // Configuration phase: failures here are usage errors.
    Dataset data;
    Geometry geom = Geometry::make(1, 1, 1, 1, 1, 1);
    Hyperparams hyper;
    ModelParams eta0;
    bool have_eta0 = false;
    try {
        if (!fs::exists(manifest)) {
            throw MissingFile("manifest not found: " + manifest.string());
        }
        const Manifest m = Manifest::read(manifest);
        geom = make_geometry(m.width, m.height, gopts);
        data = load_dataset(manifest, geom.kernel().photometric_box);
        hyper = make_hyper(geom, hopts, cfg.sigma_fixed);
        cfg.validate();
        if (!init_params.empty()) {
            eta0 = load_model(init_params).eta;
            have_eta0 = true;
        }
        fs::create_directories(out);
        if (checkpoint_every > 0) fs::create_directories(out / "checkpoints");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        SaemObserver observer = [&](const SaemState& state, const TraceRow& row) {
            if (checkpoint_every > 0 && row.k % checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof(name), "checkpoints/ckpt_%04d.dtmx", row.k);
                save_model(out / name, state.eta, hyper, geom);
            }
        };
        const auto [eta, trace] =
            train(data, hyper, cfg, geom, observer, have_eta0 ? &eta0 : nullptr);

        {
            std::ofstream os(out / "trace.tsv", std::ios::binary | std::ios::trunc);
            trace.write_tsv(os);
        }
        save_model(out / "params_final.dtmx", eta, hyper, geom);
        write_template_images(eta, geom, out);

        std::cout << "trained " << hyper.tau_m << " components on " << data.size()
                  << " images; outputs in " << out.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_synth(const fs::path& out, int n, int width, int height, const GeomOpts& gopts,
              const HyperOpts& hopts, double deform_sd, double noise_var, double rho0,
              const std::string& params_file, std::uint64_t seed) {
    Geometry geom = Geometry::make(1, 1, 1, 1, 1, 1);
    ModelParams truth;
    Hyperparams hyper;
    try {
        if (n < 1) throw Error("synth requires n >= 1");
        if (!params_file.empty()) {
            LoadedModel lm = load_model(params_file);
            geom = lm.geom;
            truth = lm.eta;
            hyper = lm.hyper;
        } else {
            geom = make_geometry(width, height, gopts);
            truth = bars_truth(geom, hopts.components, deform_sd, noise_var, rho0);
            hyper = make_hyper(geom, hopts, false);
        }
        fs::create_directories(out);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        const Dataset data = generate_synthetic(truth, n, geom, seed);
        save_dataset(data, out);
        save_truth(out / "truth.dtmx", truth, hyper, geom, *data.truth_hidden);

        std::vector<int> counts(truth.count(), 0);
        for (int i = 0; i < n; ++i) counts[data.truth_hidden->tau[i]]++;
        std::cout << "n = " << n << "\ncomponents = " << truth.count() << "\n";
        for (int t = 0; t < truth.count(); ++t) {
            std::cout << "count_" << t << " = " << counts[t] << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_sample(const std::string& params_file, const fs::path& out, int count, int template_comp,
               int cov_comp, std::uint64_t seed) {
    try {
        if (count < 0) throw Error("count must be non-negative");
        const LoadedModel lm = load_model(params_file);
        if (cov_comp < 0) cov_comp = template_comp;
        fs::create_directories(out);
        const auto samples =
            draw_samples(lm.eta, count, template_comp, cov_comp, lm.geom, seed);
        char name[96];
        for (int i = 0; i < count; ++i) {
            std::snprintf(name, sizeof(name), "sample_t%d_c%d_%03d_plus.pgm", template_comp,
                          cov_comp, i);
            write_pgm(out / name, lm.geom.pixels().width, lm.geom.pixels().height,
                      samples[i].plus);
            std::snprintf(name, sizeof(name), "sample_t%d_c%d_%03d_minus.pgm", template_comp,
                          cov_comp, i);
            write_pgm(out / name, lm.geom.pixels().width, lm.geom.pixels().height,
                      samples[i].minus);
        }
        std::cout << "wrote " << 2 * count << " images to " << out.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_render(const std::string& params_file, const fs::path& out) {
    try {
        const LoadedModel lm = load_model(params_file);
        fs::create_directories(out);
        write_template_images(lm.eta, lm.geom, out);
        std::cout << "wrote " << lm.eta.count() << " template images to " << out.string()
                  << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_info(const std::string& input) {
    try {
        const fs::path p(input);
        if (p.extension() == ".dtmx") {
            const Container c = Container::read(p);
            for (const auto& [k, v] : c.meta) std::cout << k << " = " << v << "\n";
            for (const auto& [name, m] : c.blocks()) {
                std::cout << "block " << name << " " << m.rows() << "x" << m.cols() << "\n";
            }
        } else {
            const Manifest m = Manifest::read(p);
            std::cout << "images = " << m.paths.size() << "\nwidth = " << m.width
                      << "\nheight = " << m.height << "\nnormalization = " << m.normalization
                      << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deformable template mixture estimation"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "Read options from an INI file (one section per subcommand)");

    // train
    auto* tr = app.add_subcommand("train", "Estimate a mixture model from a dataset");
    std::string tr_manifest, tr_out, tr_init;
    GeomOpts tr_geom;
    HyperOpts tr_hyper;
    SaemConfig tr_cfg;
    int tr_checkpoint_every = 25;
    bool tr_dump = false;
    tr->add_option("--manifest", tr_manifest, "Dataset manifest path")->required();
    tr->add_option("--out", tr_out, "Output directory")->required();
    add_geom_options(tr, tr_geom);
    add_hyper_options(tr, tr_hyper);
    tr->add_option("--kmax", tr_cfg.k_max, "Total iterations")->capture_default_str();
    tr->add_option("--kheat", tr_cfg.k_heat, "Heating iterations (step size 1)")
        ->capture_default_str();
    tr->add_option("--step-exponent", tr_cfg.step_exponent, "Step-size decay exponent")
        ->capture_default_str();
    tr->add_option("--sweeps,-J", tr_cfg.j0, "Gibbs sweeps per iteration")
        ->capture_default_str();
    tr->add_flag("--j-growth", tr_cfg.j_growth, "Grow the sweep count as sqrt(k)");
    tr->add_option("--compact-radius0", tr_cfg.compact_radius0,
                   "First truncation radius (0 = auto)")
        ->capture_default_str();
    tr->add_option("--compact-growth", tr_cfg.compact_growth, "Truncation radius growth")
        ->capture_default_str();
    tr->add_option("--kappa-ceiling", tr_cfg.kappa_ceiling, "Max truncation count")
        ->capture_default_str();
    tr->add_flag("--sigma-fixed", tr_cfg.sigma_fixed, "Keep noise variances fixed");
    tr->add_option("--threads", tr_cfg.threads, "Worker threads (0 = auto)")
        ->capture_default_str();
    tr->add_option("--seed", tr_cfg.seed, "Master seed")
        ->envname("DTMIX_SEED")
        ->capture_default_str();
    tr->add_option("--checkpoint-every", tr_checkpoint_every,
                   "Checkpoint period in iterations (0 = off)")
        ->capture_default_str();
    tr->add_option("--init-params", tr_init, "Checkpoint to initialize the parameters from");
    tr->add_flag("--dump-config", tr_dump, "Print the effective configuration before running");

    // synth
    auto* sy = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
    std::string sy_out, sy_params;
    GeomOpts sy_geom;
    HyperOpts sy_hyper;
    int sy_n = 0, sy_width = 16, sy_height = 16;
    double sy_deform = 0.15, sy_noise = 0.02, sy_rho0 = 0.5;
    std::uint64_t sy_seed = 0;
    sy->add_option("--out", sy_out, "Output directory")->required();
    sy->add_option("--n", sy_n, "Number of images")->required();
    sy->add_option("--width", sy_width, "Image width")->capture_default_str();
    sy->add_option("--height", sy_height, "Image height")->capture_default_str();
    add_geom_options(sy, sy_geom);
    add_hyper_options(sy, sy_hyper);
    sy->add_option("--deform-sd", sy_deform, "Deformation coefficient std dev")
        ->capture_default_str();
    sy->add_option("--noise", sy_noise, "Noise variance sigma^2")->capture_default_str();
    sy->add_option("--rho0", sy_rho0, "Weight of component 0 (two components)")
        ->capture_default_str();
    sy->add_option("--params", sy_params, "Generate from a checkpoint instead of the preset");
    sy->add_option("--seed", sy_seed, "Master seed")
        ->envname("DTMIX_SEED")
        ->capture_default_str();

    // sample
    auto* sa = app.add_subcommand("sample", "Draw deformed template pairs from a checkpoint");
    std::string sa_params, sa_out;
    int sa_count = 8, sa_template = 0, sa_cov = -1;
    std::uint64_t sa_seed = 0;
    sa->add_option("--params", sa_params, "Model checkpoint")->required();
    sa->add_option("--out", sa_out, "Output directory")->required();
    sa->add_option("--count", sa_count, "Number of (beta, -beta) pairs")->capture_default_str();
    sa->add_option("--template-component", sa_template, "Component providing the template")
        ->capture_default_str();
    sa->add_option("--covariance-component", sa_cov,
                   "Component providing the deformation covariance (-1 = same)")
        ->capture_default_str();
    sa->add_option("--seed", sa_seed, "Master seed")
        ->envname("DTMIX_SEED")
        ->capture_default_str();

    // render
    auto* re = app.add_subcommand("render", "Render component templates from a checkpoint");
    std::string re_params, re_out;
    re->add_option("--params", re_params, "Model checkpoint")->required();
    re->add_option("--out", re_out, "Output directory")->required();

    // info
    auto* in = app.add_subcommand("info", "Describe a checkpoint or dataset manifest");
    std::string in_input;
    in->add_option("--input", in_input, "Checkpoint (.dtmx) or manifest path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (tr->parsed()) {
        if (tr_dump) std::cout << app.config_to_str(true, false);
        return cmd_train(tr_manifest, tr_out, tr_geom, tr_hyper, tr_cfg, tr_checkpoint_every,
                         tr_init);
    }
    if (sy->parsed()) {
        return cmd_synth(sy_out, sy_n, sy_width, sy_height, sy_geom, sy_hyper, sy_deform,
                         sy_noise, sy_rho0, sy_params, sy_seed);
    }
    if (sa->parsed()) {
        return cmd_sample(sa_params, sa_out, sa_count, sa_template, sa_cov, sa_seed);
    }
    if (re->parsed()) return cmd_render(re_params, re_out);
    if (in->parsed()) return cmd_info(in_input);
    return kExitConfig;
}
