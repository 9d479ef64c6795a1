// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "a3sim/attacknet.hpp"
#include "a3sim/crossbar.hpp"
#include "a3sim/hwmodel.hpp"
#include "a3sim/netspec.hpp"
#include "a3sim/pipeline.hpp"
#include "a3sim/presets.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace a3;
using a3::testing::Gen;

namespace {

struct Outcome {
  bool ok;
  std::string detail;
};

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * want; }

Outcome table_regression() {
  struct Row {
    const char* preset;
    double power;
    double area;
  };
  const Row rows[] = {{"baseline", 49.72, 36.814}, {"a3p", 49.719, 23.992}, {"a3r", 78.53, 36.813}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const auto cfg = hardware_preset(r.preset);
    const double p = total_power(cfg);
    const double a = total_area(cfg);
    ok = ok && within(p, r.power, 0.005) && within(a, r.area, 0.005);
    detail += fmt::format("{} {:.4g} W {:.5g} mm2; ", r.preset, p, a);
  }
  return {ok, detail};
}

Outcome derivation() {
  const auto base = baseline_config();
  const auto p = derive_design_point(base, reduced_buffers(), Budget::same_power, StorageMode::dual);
  const auto a = derive_design_point(base, reduced_buffers(), Budget::same_area, StorageMode::dual);
  return {p.crossbar_count() == 17265 && std::abs(a.crossbar_count() - 27553) <= 10,
          fmt::format("same_power {} same_area {}", p.crossbar_count(), a.crossbar_count())};
}

bool at(const PipelineTrace& t, int cycle, Action a, int layer, int image = -1) {
  return std::any_of(t.events.begin(), t.events.end(), [&](const ScheduleEvent& e) {
    return e.cycle == cycle && e.action == a && e.layer == layer && (image < 0 || e.image == image);
  });
}

bool program_at(const PipelineTrace& t, int cycle, std::vector<int> layers) {
  for (const auto& e : t.events)
    if (e.cycle == cycle && e.action == Action::program) {
      std::vector<int> got;
      for (const auto& w : e.programmed) got.push_back(w.layer);
      return got == layers;
    }
  return false;
}

Outcome golden_pipeline() {
  const auto net = four_layer_network();
  const CrossbarGeometry geom;
  const auto costs = layer_costs(net, geom);
  const auto t = schedule(net, geom, costs[0] + costs[1]);
  const bool ok = program_at(t, 5, {3, 4}) && at(t, 8, Action::error_init, 4, 1) &&
                  at(t, 9, Action::error_init, 4, 2) && at(t, 10, Action::accumulate, 4) &&
                  at(t, 11, Action::ep_compute, 4) && at(t, 12, Action::ep_compute, 3) &&
                  program_at(t, 13, {2, 1}) && at(t, 14, Action::ep_compute, 2) &&
                  at(t, 15, Action::input_error, 1) && at(t, 16, Action::mask_update, 0) &&
                  t.total_cycles == 16 && verify_trace(t).empty();
  const bool same = to_csv(t) == to_csv(schedule(net, geom, costs[0] + costs[1]));
  return {ok && same, fmt::format("total_cycles {} overwrites {} identical {}", t.total_cycles,
                                  t.overwrite_count, same)};
}

IntMatrix random_int_matrix(Gen& g, int rows, int cols, std::int64_t limit) {
  IntMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g.range64(-limit, limit);
  return m;
}

QuantizedTensor random_input(Gen& g, int n, int bits) {
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
  IntVector v(n);
  for (int i = 0; i < n; ++i) v(i) = g.range64(-hi - 1, hi);
  return QuantizedTensor::from_vector(v, 1.0, bits);
}

Outcome dual_single() {
  Gen g(1004);
  CrossbarGeometry geom;
  geom.adc_bits = 16;
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const IntMatrix w = random_int_matrix(g, g.range(1, geom.rows), g.range(1, geom.logical_cols()),
                                          max_weight_level(geom));
    agree += dual_single_equiv_check(QuantizedTensor::from_matrix(w, 1.0, geom.weight_bits()),
                                     random_input(g, static_cast<int>(w.rows()), 16), geom);
  }
  return {agree == 1000, fmt::format("{}/1000 bit-exact", agree)};
}

Outcome mvm_oracle() {
  Gen g(1005);
  int agree = 0;
  std::int64_t saturated = 0;
  for (int i = 0; i < 1000; ++i) {
    CrossbarGeometry geom;
    geom.rows = g.range(1, 128);
    geom.cells_per_weight = g.range(1, 3);
    geom.cols = geom.cells_per_weight * g.range(1, 32);
    geom.dac_bits = g.range(1, 4);
    geom.adc_bits = 24;
    const IntMatrix w = random_int_matrix(g, g.range(1, geom.rows), g.range(1, geom.logical_cols()),
                                          max_weight_level(geom));
    const auto x = random_input(g, static_cast<int>(w.rows()), g.range(1, 16));
    IntVector expect = IntVector::Zero(w.cols());
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index r = 0; r < w.rows(); ++r) expect(j) += w(r, j) * x.values(r);
    const auto q = QuantizedTensor::from_matrix(w, 1.0, geom.weight_bits());
    MvmStats stats;
    const auto mode = i % 2 ? StorageMode::single : StorageMode::dual;
    agree += mvm(program(q, geom, mode), x, geom, &stats).values == expect;
    saturated += stats.saturated;
  }
  int pool_ok = 0;
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      for (int c = 0; c < 8; ++c)
        for (int d = 0; d < 8; ++d) {
          const int v[4] = {a, b, c, d};
          int best = 0;
          for (int k = 1; k < 4; ++k)
            if (v[k] > v[best]) best = k;
          const auto r = max_pool4(a, b, c, d);
          pool_ok += r.index == best && r.value == v[best];
        }
  return {agree == 1000 && saturated == 0 && pool_ok == 4096,
          fmt::format("mvm {}/1000, saturated {}, max_pool4 {}/4096", agree, saturated, pool_ok)};
}

Outcome gradient_check() {
  Gen g(1006);
  int nets = 0;
  double worst = 0.0;
  int compared = 0;
  int skipped = 0;
  bool every_net_compared = true;
  while (nets < 20) {
    const auto net = g.network(4, 10, 4);
    if (a3::testing::parameter_count(net) > 500) continue;
    ++nets;
    const auto w = random_weights<double>(net, static_cast<std::uint64_t>(5000 + nets));
    std::vector<Eigen::VectorXd> clean;
    for (int i = 0; i < net.batch_size; ++i) clean.push_back(g.vec(net.input.count()));
    const Eigen::VectorXd mask = g.vec(net.input.count(), -0.3, 0.3);
    const auto r = a3::testing::fd_check(net, w, clean, mask, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    compared += r.compared;
    skipped += r.skipped;
    every_net_compared = every_net_compared && r.compared > 0;
  }
  return {worst <= 1e-3 && every_net_compared,
          fmt::format("max rel error {:.3g} over {} coordinates ({} at a kink skipped)", worst,
                      compared, skipped)};
}

Outcome buffer_ratio() {
  const auto r = analyze(uniform_network(20), CrossbarGeometry{}, 1, StorageMode::single);
  return {r.ratio < 0.1, fmt::format("ratio {:.4g}", r.ratio)};
}

struct DesignRun {
  std::string name;
  std::int64_t capacity;
  double speedup;
  int overwrites;
  EnergyBreakdown energy;
};

std::vector<DesignRun> run_designs(const NetworkSpec& net) {
  std::vector<DesignRun> runs;
  double base_runtime = 0.0;
  for (const char* name : {"baseline", "a3p", "a3r", "a3px", "a3rx"}) {
    const auto cfg = hardware_preset(name);
    const auto trace = schedule(net, CrossbarGeometry{}, effective_capacity(cfg));
    const auto m = metrics(trace, cfg, net, net.attack.iterations, base_runtime);
    if (base_runtime == 0.0) base_runtime = m.runtime_s;
    runs.push_back({name, effective_capacity(cfg), m.speedup, m.overwrites,
                    energy_breakdown(trace, cfg, net)});
  }
  return runs;
}

const DesignRun& find(const std::vector<DesignRun>& runs, const std::string& name) {
  return *std::find_if(runs.begin(), runs.end(), [&](const DesignRun& r) { return r.name == name; });
}

Outcome trends() {
  bool ok = true;
  std::string detail;
  for (const auto& name : standin_names()) {
    const auto runs = run_designs(network_preset(name));
    const auto& base = find(runs, "baseline");
    const bool a = find(runs, "a3rx").speedup >= find(runs, "a3px").speedup &&
                   find(runs, "a3px").speedup >= base.speedup && base.speedup == 1.0 &&
                   find(runs, "a3r").speedup >= find(runs, "a3p").speedup;
    bool b = true;
    bool c = true;
    for (const auto& x : runs)
      for (const auto& y : runs) {
        if (x.capacity <= y.capacity && x.overwrites < y.overwrites) b = false;
        // Overwrite ratios share the baseline denominator, so raw counts rank the same.
        if (x.speedup > y.speedup && x.overwrites > y.overwrites) c = false;
      }
    ok = ok && a && b && c;
    detail += fmt::format("{}: speedups", name);
    for (const auto& r : runs) detail += fmt::format(" {:.3g}", r.speedup);
    detail += "; ";
  }
  return {ok, detail};
}

Outcome energy() {
  bool ok = true;
  std::string detail;
  for (const auto& name : standin_names()) {
    const auto runs = run_designs(network_preset(name));
    for (const auto& r : runs) {
      const auto& e = r.energy;
      ok = ok && (e.adc + e.dac + e.buffer + e.crossbar + e.others == e.total());
    }
    auto share = [&](const char* n) {
      const auto& e = find(runs, n).energy;
      return (e.adc + e.dac) / e.total();
    };
    ok = ok && share("a3px") > share("a3p");
    detail += fmt::format("{}: a3p {:.4g} a3px {:.4g}; ", name, share("a3p"), share("a3px"));
  }
  return {ok, detail};
}

Outcome convergence() {
  const auto net = toy_linear_network();
  Eigen::MatrixXd wm(4, 2);
  wm << 1.0, -0.5, -0.5, 1.0, 0.3, 0.2, 0.0, 0.4;
  const WeightSet<double> w({wm});
  const std::vector<Eigen::VectorXd> clean{(Eigen::VectorXd(4) << 1.0, 0.0, 0.5, 0.0).finished()};
  const double lip = a3::testing::linear_smoothness(wm, net.attack.lambda);
  bool monotone = true;
  int first_hit = 0;
  for (double fraction : {0.25, 0.5, 1.0, 1.5, 1.95}) {
    AttackConfig a = net.attack;
    a.iterations = 100;
    a.learning_rate = fraction / lip;
    const auto log = train(net, w, std::span<const Eigen::VectorXd>(clean), a);
    for (std::size_t i = 1; i < log.iterations.size(); ++i)
      monotone = monotone && log.iterations[i].loss <= log.iterations[i - 1].loss + 1e-12;
    if (fraction == 1.0)
      for (const auto& rec : log.iterations)
        if (rec.misclassified) {
          first_hit = rec.iteration;
          break;
        }
  }
  return {monotone && first_hit > 1,
          fmt::format("eta bound {:.4g}, first misclassified iteration {}, loss non-increasing {}",
                      2.0 / lip, first_hit, monotone)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "table regression", 1.0, table_regression},
      {2, "design-point derivation", 1.0, derivation},
      {3, "golden pipeline", 1.0, golden_pipeline},
      {4, "single/dual equivalence", 10.0, dual_single},
      {5, "mvm oracle", 30.0, mvm_oracle},
      {6, "gradient check", 60.0, gradient_check},
      {7, "buffer ratio", 1.0, buffer_ratio},
      {8, "trend properties", 60.0, trends},
      {9, "energy breakdown", 10.0, energy},
      {10, "attack convergence", 10.0, convergence},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.ok && s < c.limit_s;
    failures += !pass;
    std::printf("%s %2d %s: %s [%.3f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s, c.limit_s);
  }
  return failures == 0 ? 0 : 1;
}
