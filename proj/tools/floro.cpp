#include "floro/elements.h"
#include "floro/fit.h"
#include "floro/io.h"
#include "floro/mixture.h"
#include "floro/network.h"
#include "floro/rng.h"

#include <CLI11.hpp>

#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace floro;
using geom::Mat3;
using geom::Vec3;

// Exit contract: 0 success, 1 usage error (bad flags, unreadable paths),
// 2 numeric or validation failure (malformed content, domain errors,
// failed checks).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string &path) {
  try {
    return io::read_file(path);
  } catch (const std::exception &e) {
    throw UsageError(e.what());
  }
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct GridArgs {
  std::vector<int> shape;
  std::vector<double> box;
  std::vector<double> origin;
  std::string like;

  void attach(CLI::App *cmd) {
    cmd->add_option("--shape", shape,
                    "Voxel counts n1 n2 n3 (one value repeats)")
        ->expected(1, 3);
    cmd->add_option("--box", box, "Orthogonal box lengths in Angstrom")
        ->expected(1, 3);
    cmd->add_option("--origin", origin, "Grid origin in Angstrom")
        ->expected(3);
    cmd->add_option("--like", like,
                    "Copy the grid spec (and atoms) from this CHGCAR");
  }

  bool given() const { return !shape.empty() || !box.empty() || !like.empty(); }

  mix::GridSpec build() const {
    if (!like.empty()) {
      const auto [mol, grid] = io::parse_chgcar(slurp(like));
      return grid.spec;
    }
    if (shape.empty() || box.empty())
      throw UsageError("grid needs --like or both --shape and --box");
    mix::GridSpec spec;
    for (int a = 0; a < 3; ++a) {
      spec.shape[a] = shape[std::min<std::size_t>(a, shape.size() - 1)];
      if (spec.shape[a] < 1)
        throw UsageError("--shape entries must be positive");
    }
    spec.cell = Mat3::Zero();
    for (int a = 0; a < 3; ++a) {
      const double len = box[std::min<std::size_t>(a, box.size() - 1)];
      if (!(len > 0.0))
        throw UsageError("--box lengths must be positive");
      spec.cell(a, a) = len;
    }
    if (!origin.empty())
      spec.origin = Vec3(origin[0], origin[1], origin[2]);
    return spec;
  }
};

mix::Sampling parse_sampling(const std::string &name) {
  if (name == "corner")
    return mix::Sampling::Corner;
  if (name == "centered")
    return mix::Sampling::Centered;
  throw UsageError("--sampling must be corner or centered");
}

// Pins every mean back to its atom (the no-floating-orbital ablation).
// Gaussians are stored atom by atom, first n_e(Z)*M_e channels each.
void pin_means(mix::Mixture &m, const geom::Molecule &mol, int me) {
  std::size_t g = 0;
  for (const auto &atom : mol.atoms) {
    const std::size_t used =
        static_cast<std::size_t>(valence_electrons(atom.z)) * me;
    for (std::size_t j = 0; j < used && g < m.gaussians.size(); ++j, ++g)
      m.gaussians[g] = mix::Gaussian::make(m.gaussians[g].w, atom.position,
                                           m.gaussians[g].sigma);
  }
}

void require_rotation(const Mat3 &rot) {
  if ((rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff() >
          1e-10 ||
      std::abs(rot.determinant() - 1.0) > 1e-10)
    throw std::invalid_argument("rotation matrix is not orthogonal");
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string &mixture_path, const std::string &out_path,
             const GridArgs &grid_args, const std::string &xyz_path,
             const std::string &sampling_name, double prune, int threads,
             bool renormalize) {
  const auto [m, n_elec] = io::read_mixture(slurp(mixture_path));
  const auto sampling = parse_sampling(sampling_name);

  geom::Molecule mol;
  mix::GridSpec spec;
  if (!grid_args.like.empty()) {
    auto parsed = io::parse_chgcar(slurp(grid_args.like));
    mol = parsed.first;
    spec = parsed.second.spec;
    if (!xyz_path.empty())
      mol = io::parse_xyz(slurp(xyz_path));
  } else if (!xyz_path.empty()) {
    mol = io::parse_xyz(slurp(xyz_path));
    spec = grid_args.build();
  } else {
    throw UsageError(
        "eval needs --like <chgcar>, or --xyz with --shape and --box");
  }

  mix::Mixture ready = m;
  if (renormalize)
    ready = mix::normalize(m, spec, n_elec, sampling, prune, threads);
  const auto grid = mix::rasterize(ready, spec, sampling, prune, threads);
  io::write_file(out_path, io::write_chgcar(mol, grid));
  std::printf("integral %s\n", fmt(mix::integrate(grid)).c_str());
  return 0;
}

// ----------------------------------------------------------------- fit

int cmd_fit(const std::string &xyz_path, const std::string &chgcar_path,
            const std::string &out_path, fit::FitConfig config, int me,
            const std::string &denominator) {
  const auto mol = io::parse_xyz(slurp(xyz_path));
  const auto [ref_mol, ref] = io::parse_chgcar(slurp(chgcar_path));
  (void)ref_mol;
  if (denominator != "grid" && denominator != "nelec")
    throw UsageError("--denominator must be grid or nelec");

  const auto [best, report] = fit::fit(mol, ref, me, config);
  for (const auto &[step, loss] : report.history)
    std::printf("step %d loss %s\n", step, fmt(loss).c_str());

  const double n_elec = mol.total_valence_electrons();
  const auto pred = mix::rasterize(best, ref.spec, config.sampling,
                                   config.prune_threshold, config.threads);
  const double pct = denominator == "grid"
                         ? mix::nmae(pred, ref)
                         : mix::nmae_nelec(pred, ref, n_elec);
  std::printf("gaussians %zu\n", best.gaussians.size());
  std::printf("final_loss %s\n", fmt(report.final_loss).c_str());
  std::printf("nmae_pct %s\n", fmt(pct).c_str());
  std::fprintf(stderr, "fit: %d steps in %.2f s\n", report.steps,
               report.wall_seconds);

  io::write_file(out_path, io::write_mixture(best, n_elec));
  return 0;
}

// ---------------------------------------------------------------- nmae

int cmd_nmae(const std::string &pred_path, const std::string &ref_path,
             const std::string &denominator) {
  const auto [pred_mol, pred] = io::parse_chgcar(slurp(pred_path));
  const auto [ref_mol, ref] = io::parse_chgcar(slurp(ref_path));
  (void)pred_mol;
  double pct = 0.0;
  if (denominator == "grid") {
    pct = mix::nmae(pred, ref);
  } else if (denominator == "nelec") {
    pct = mix::nmae_nelec(pred, ref, ref_mol.total_valence_electrons());
  } else {
    throw UsageError("--denominator must be grid or nelec");
  }
  std::printf("%.6f\n", pct);
  return 0;
}

// ------------------------------------------------------------- forward

int cmd_forward(const std::string &xyz_path, const std::string &out_path,
                uint64_t seed, int me, double cutoff,
                const net::ForwardOptions &options, bool no_floating) {
  const auto mol = io::parse_xyz(slurp(xyz_path));
  net::NetworkConfig config;
  config.gaussians_per_electron = me;
  config.cutoff = cutoff;
  const auto params = net::NetworkParams::random(config, seed);
  auto m = net::forward(mol, params, options);
  if (no_floating)
    pin_means(m, mol, me);
  io::write_file(out_path, io::write_mixture(m, mol.total_valence_electrons()));
  std::printf("gaussians %zu\n", m.gaussians.size());
  return 0;
}

// --------------------------------------------------------------- check

struct CheckOutcome {
  bool failed = false;

  void report(const std::string &name, double worst, double tol) {
    const bool ok = worst <= tol;
    failed = failed || !ok;
    std::printf("check %s %s %s\n", name.c_str(), ok ? "pass" : "fail",
                fmt(worst).c_str());
  }
  void skip(const std::string &name, const std::string &why) {
    std::printf("check %s skip (%s)\n", name.c_str(), why.c_str());
  }
};

int cmd_check(const std::string &xyz_path, uint64_t seed,
              bool corrupt_rotation) {
  const auto mol = io::parse_xyz(slurp(xyz_path));
  std::mt19937_64 gen(seed);
  CheckOutcome out;

  const auto draw_rotation = [&] {
    Mat3 rot = rng::random_rotation(gen);
    if (corrupt_rotation)
      rot(0, 0) += 0.05;
    require_rotation(rot);
    return rot;
  };

  // closed-form density invariance under a joint rotation
  {
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const Vec3 mu(rng::uniform(gen, -2, 2), rng::uniform(gen, -2, 2),
                    rng::uniform(gen, -2, 2));
      // bounded-condition covariance so inverse roundoff stays far
      // below the tolerance
      Mat3 lower = Mat3::Zero();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < r; ++c)
          lower(r, c) = rng::uniform(gen, -0.3, 0.3);
        lower(r, r) = rng::uniform(gen, 0.5, 1.5);
      }
      const Mat3 sigma = lower * lower.transpose();
      const auto g = mix::Gaussian::make(1.0, mu, sigma);
      const Vec3 r = mu + Vec3(rng::uniform(gen, -2, 2),
                               rng::uniform(gen, -2, 2),
                               rng::uniform(gen, -2, 2));
      const Mat3 rot = draw_rotation();
      const auto rg = mix::Gaussian::make(
          1.0, rot * mu, rot * sigma * rot.transpose());
      worst = std::max(worst,
                       std::abs(rg.pdf(rot * r) - g.pdf(r)) / g.pdf(r));
    }
    out.report("gaussian_invariance", worst, 1e-12);
  }

  net::NetworkConfig config;
  const auto params = net::NetworkParams::random(config, seed);
  const auto graph = geom::build_neighbor_graph(mol, config.cutoff);
  const auto base = net::forward(mol, params);

  // mixture density invariance under joint rotation + translation; the
  // unclamped sum is compared so the ReLU kink cannot inflate the
  // relative deviation
  {
    mix::Mixture smooth = base;
    smooth.clamp_negative = false;
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Mat3 rot = draw_rotation();
      const Vec3 shift(rng::uniform(gen, -2, 2), rng::uniform(gen, -2, 2),
                       rng::uniform(gen, -2, 2));
      const auto moved = mix::translated(mix::rotated(smooth, rot), shift);
      const Vec3 r(rng::uniform(gen, -2, 2), rng::uniform(gen, -2, 2),
                   rng::uniform(gen, -2, 2));
      const double v0 = smooth.eval_point(r);
      const double v1 = moved.eval_point(rot * r + shift);
      worst = std::max(worst, std::abs(v1 - v0) / std::max(std::abs(v0), 1e-12));
    }
    out.report("density_invariance", worst, 1e-12);
  }

  // full-pipeline equivariance; ill-posed on tie boundaries
  if (geom::near_frame_tie(mol, graph)) {
    out.skip("forward_equivariance", "frame tie boundary");
  } else {
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
      const Mat3 rot = draw_rotation();
      geom::Molecule rotated_mol = mol;
      for (auto &atom : rotated_mol.atoms)
        atom.position = rot * atom.position;
      const auto rm = net::forward(rotated_mol, params);
      for (std::size_t g = 0; g < base.gaussians.size(); ++g) {
        const auto &g0 = base.gaussians[g];
        const auto &g1 = rm.gaussians[g];
        worst = std::max(worst, std::abs(g0.w - g1.w));
        worst = std::max(worst,
                         (rot * g0.mu - g1.mu).cwiseAbs().maxCoeff());
        worst = std::max(worst, (rot * g0.sigma * rot.transpose() - g1.sigma)
                                    .cwiseAbs()
                                    .maxCoeff());
      }
    }
    out.report("forward_equivariance", worst, 1e-8);
  }

  // reflection constraint, meaningful only for a coordinate-plane molecule
  {
    int flat_axis = -1;
    for (int axis = 0; axis < 3; ++axis) {
      bool flat = true;
      for (const auto &atom : mol.atoms)
        flat = flat && std::abs(atom.position[axis]) < 1e-12;
      if (flat)
        flat_axis = axis;
    }
    if (flat_axis < 0) {
      out.skip("reflection_constraint", "molecule is not in a coordinate plane");
    } else {
      net::ForwardOptions opt;
      opt.symmetry_breaking = false;
      const auto m = net::forward(mol, params, opt);
      std::size_t g = 0;
      double worst = 0.0;
      for (const auto &atom : mol.atoms) {
        const std::size_t used = static_cast<std::size_t>(
            valence_electrons(atom.z) * config.gaussians_per_electron);
        for (std::size_t j = 0; j < used; ++j, ++g)
          worst = std::max(worst, std::abs(m.gaussians[g].mu[flat_axis] -
                                           atom.position[flat_axis]));
      }
      out.report("reflection_constraint", worst, 1e-8);
    }
  }

  // repeat run must be bit-identical
  {
    const auto again = net::forward(mol, params);
    double worst = 0.0;
    for (std::size_t g = 0; g < base.gaussians.size(); ++g) {
      worst = std::max(worst,
                       std::abs(base.gaussians[g].w - again.gaussians[g].w));
      worst = std::max(worst, (base.gaussians[g].mu - again.gaussians[g].mu)
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    out.report("forward_determinism", worst, 0.0);
  }

  return out.failed ? 2 : 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Floating-orbital Gaussian density toolkit"};
  app.require_subcommand(1);

  const int hw_threads = default_threads();

  // eval
  std::string eval_mixture, eval_out, eval_xyz, eval_sampling = "corner";
  GridArgs eval_grid;
  double eval_prune = mix::kDefaultPruneThreshold;
  int eval_threads = hw_threads;
  bool eval_norm = false;
  auto *eval = app.add_subcommand("eval", "Rasterize a mixture to CHGCAR");
  eval->add_option("mixture", eval_mixture, "Mixture document")->required();
  eval->add_option("-o,--output", eval_out, "CHGCAR to write")->required();
  eval->add_option("--xyz", eval_xyz, "Atoms for the CHGCAR header");
  eval_grid.attach(eval);
  eval->add_option("--sampling", eval_sampling, "corner or centered");
  eval->add_option("--prune-threshold", eval_prune,
                   "Mahalanobis^2 rasterization cutoff");
  eval->add_option("--threads", eval_threads, "Rasterization worker count")
      ->envname("FLORO_THREADS");
  eval->add_flag("--normalize", eval_norm,
                 "Rescale to the document electron count on this grid");

  // fit
  std::string fit_xyz, fit_chgcar, fit_out, fit_denominator = "nelec";
  fit::FitConfig fit_config;
  fit_config.steps = 500;
  fit_config.threads = hw_threads;
  int fit_me = 4;
  bool fit_no_clamp = false;
  auto *fitc = app.add_subcommand("fit", "Fit a mixture to a CHGCAR density");
  fitc->add_option("xyz", fit_xyz, "Molecule (XYZ)")->required();
  fitc->add_option("chgcar", fit_chgcar, "Reference density")->required();
  fitc->add_option("-o,--output", fit_out, "Mixture document to write")
      ->required();
  fitc->add_option("--steps", fit_config.steps, "Adam steps (default 500)");
  fitc->add_option("--lr", fit_config.learning_rate,
                   "Adam learning rate (default 3.5e-5)");
  fitc->add_option("--seed", fit_config.seed, "Initialization seed");
  fitc->add_option("--me", fit_me, "Gaussians per valence electron");
  fitc->add_option("--threads", fit_config.threads, "Worker count")
      ->envname("FLORO_THREADS");
  fitc->add_option("--prune-threshold", fit_config.prune_threshold,
                   "Mahalanobis^2 rasterization cutoff");
  fitc->add_option("--log-every", fit_config.log_every,
                   "History stride in steps");
  fitc->add_flag("--no-clamp", fit_no_clamp,
                 "Drop the negative-density clamp");
  fitc->add_option("--denominator", fit_denominator,
                   "NMAE denominator: grid or nelec");

  // nmae
  std::string nmae_pred, nmae_ref, nmae_denominator = "grid";
  auto *nm = app.add_subcommand("nmae", "Compare two CHGCAR densities");
  nm->add_option("pred", nmae_pred, "Prediction CHGCAR")->required();
  nm->add_option("ref", nmae_ref, "Reference CHGCAR")->required();
  nm->add_option("--denominator", nmae_denominator,
                 "NMAE denominator: grid or nelec");

  // forward
  std::string fwd_xyz, fwd_out;
  uint64_t fwd_seed = 7;
  int fwd_me = 4;
  double fwd_cutoff = 8.0;
  bool fwd_no_sb = false, fwd_no_debias = false, fwd_raw = false,
       fwd_no_floating = false;
  auto *fwd = app.add_subcommand(
      "forward", "Run the randomly initialized network on a molecule");
  fwd->add_option("xyz", fwd_xyz, "Molecule (XYZ)")->required();
  fwd->add_option("-o,--output", fwd_out, "Mixture document to write")
      ->required();
  fwd->add_option("--seed", fwd_seed, "Parameter seed (default 7)");
  fwd->add_option("--me", fwd_me, "Gaussians per valence electron");
  fwd->add_option("--cutoff", fwd_cutoff, "Neighbor cutoff, Angstrom");
  fwd->add_flag("--no-symmetry-breaking", fwd_no_sb,
                "Skip the inertia-frame vector initialization");
  fwd->add_flag("--no-debias", fwd_no_debias, "Skip the debias layers");
  fwd->add_flag("--raw-projection-debias", fwd_raw,
                "Project the raw vector instead of its unit copy");
  fwd->add_flag("--no-floating", fwd_no_floating,
                "Pin every Gaussian mean to its atom");

  // check
  std::string check_xyz;
  uint64_t check_seed = 7;
  bool check_corrupt = false;
  auto *chk = app.add_subcommand(
      "check", "Run the symmetry property battery on a molecule");
  chk->add_option("xyz", check_xyz, "Molecule (XYZ)")->required();
  chk->add_option("--seed", check_seed, "Sampling and parameter seed");
  chk->add_flag("--corrupt-rotation", check_corrupt,
                "Corrupt the test rotations (must error out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (eval->parsed())
      return cmd_eval(eval_mixture, eval_out, eval_grid, eval_xyz,
                      eval_sampling, eval_prune, eval_threads, eval_norm);
    if (fitc->parsed()) {
      fit_config.clamp_negative = !fit_no_clamp;
      return cmd_fit(fit_xyz, fit_chgcar, fit_out, fit_config, fit_me,
                     fit_denominator);
    }
    if (nm->parsed())
      return cmd_nmae(nmae_pred, nmae_ref, nmae_denominator);
    if (fwd->parsed()) {
      net::ForwardOptions options;
      options.symmetry_breaking = !fwd_no_sb;
      options.debias = !fwd_no_debias;
      options.raw_projection_debias = fwd_raw;
      return cmd_forward(fwd_xyz, fwd_out, fwd_seed, fwd_me, fwd_cutoff,
                         options, fwd_no_floating);
    }
    if (chk->parsed())
      return cmd_check(check_xyz, check_seed, check_corrupt);
  } catch (const UsageError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
