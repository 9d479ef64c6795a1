#include "a3sim/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "a3sim/attacknet.hpp"
#include "a3sim/crossbar_products.hpp"
#include "a3sim/error.hpp"
#include "a3sim/hwmodel.hpp"
#include "a3sim/netspec.hpp"
#include "a3sim/pipeline.hpp"
#include "a3sim/presets.hpp"
#include "a3sim/tensor_io.hpp"

namespace a3 {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Manifest {
  std::string command;
  std::string net = "four-layer";
  std::string hw = "baseline";
  std::vector<std::string> designs;
  int copies = 1;
  int replication = 1;
  int batches = 1;
  std::string out_dir;
  std::string format;
  bool quantized = false;
  std::uint64_t seed = 1;
  std::string weights;
  std::string input;
  int iterations = 0;
};

std::string num(double v) { return fmt::format("{:.6g}", v); }

// Rounds to six significant digits so JSON reports are as stable as the CSV ones.
double round6(double v) {
  if (!std::isfinite(v)) return v;
  return std::stod(fmt::format("{:.6g}", v));
}

NetworkSpec resolve_net(const std::string& ref) {
  if (fs::exists(ref)) return load_network(ref);
  const auto names = network_preset_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return network_preset(ref);
  throw std::ios_base::failure("cannot open network config: " + ref);
}

HardwareConfig resolve_hw(const std::string& ref) {
  if (fs::exists(ref)) return load_hardware(ref);
  const auto names = hardware_preset_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return hardware_preset(ref);
  throw std::ios_base::failure("cannot open hardware config: " + ref);
}

class Sink {
 public:
  Sink(const std::string& dir, std::ostream& out) : dir_(dir), out_(out) {
    if (!dir_.empty()) {
      std::error_code ec;
      fs::create_directories(dir_, ec);
      if (ec || !fs::is_directory(dir_))
        throw std::ios_base::failure("cannot create output directory: " + dir_);
    }
  }

  void write(const std::string& name, const std::string& content) {
    if (dir_.empty()) {
      out_ << content;
      return;
    }
    const fs::path path = fs::path(dir_) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << content)) throw std::ios_base::failure("cannot write " + path.string());
  }

  bool to_files() const { return !dir_.empty(); }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::ostream& out_;
};

std::string digest_hex(std::uint64_t d) { return fmt::format("{:016x}", d); }

std::string manifest_text(const Manifest& m, const NetworkSpec& net,
                          const std::vector<HardwareConfig>& hw) {
  std::string text = fmt::format("command={}\nnet={}\n", m.command, emit_network(net));
  for (const auto& h : hw) text += "hw=" + emit_hardware(h);
  text += fmt::format("copies={}\nreplication={}\nbatches={}\nformat={}\nquantized={}\nseed={}\n",
                      m.copies, m.replication, m.batches, m.format, m.quantized, m.seed);
  text += fmt::format("weights={}\ninput={}\niterations={}\n", m.weights, m.input, m.iterations);
  return text;
}

json breakdown_json(const BufferBreakdown& b) {
  return {{"neuron_bits", b.neuron_bits},       {"error_bits", b.error_bits},
          {"bitmap_bits", b.bitmap_bits},       {"pool_index_bits", b.pool_index_bits},
          {"total_bits", b.total_bits()},       {"total_bytes", b.total_bytes()}};
}

json dims_json(const Dims& d) { return json::array({d.height, d.width, d.channels}); }

int cmd_analyze(const Manifest& m, std::ostream& out) {
  const NetworkSpec net = resolve_net(m.net);
  const HardwareConfig hw = resolve_hw(m.hw);
  const CrossbarGeometry geom;
  const auto report = analyze(net, geom, m.replication, hw.storage);
  const auto digest = digest_hex(fnv1a(manifest_text(m, net, {hw})));
  Sink sink(m.out_dir, out);

  if (m.format == "csv") {
    std::string csv = "# manifest_digest=" + digest + "\n";
    csv += "layer,kind,input,output,crossbars,cnn_duration,neurons\n";
    for (std::size_t l = 0; l < net.depth(); ++l) {
      const auto& layer = net.layers[l];
      const auto in = layer.input;
      const auto o = layer.output();
      csv += fmt::format("{},{},{}x{}x{},{}x{}x{},{},{},{}\n", l + 1, to_string(layer.kind),
                         in.height, in.width, in.channels, o.height, o.width, o.channels,
                         report.per_layer_crossbars[l], report.durations[l],
                         layer.conv_output().count());
    }
    csv += fmt::format("# total_crossbars={}\n# buffer_bytes_cnn={}\n# buffer_bytes_attack={}\n"
                       "# attack_to_cnn_ratio={}\n",
                       report.total_crossbars, report.buffer_bytes_cnn,
                       report.buffer_bytes_attack, num(report.ratio));
    sink.write("analysis.csv", csv);
  } else {
    json doc;
    doc["manifest_digest"] = digest;
    doc["network"] = net.name;
    doc["storage"] = std::string(to_string(hw.storage));
    doc["replication"] = m.replication;
    doc["layers"] = json::array();
    for (std::size_t l = 0; l < net.depth(); ++l) {
      const auto& layer = net.layers[l];
      doc["layers"].push_back({{"layer", l + 1},
                               {"kind", std::string(to_string(layer.kind))},
                               {"input", dims_json(layer.input)},
                               {"output", dims_json(layer.output())},
                               {"crossbars", report.per_layer_crossbars[l]},
                               {"cnn_duration", report.durations[l]},
                               {"neurons", layer.conv_output().count()}});
    }
    doc["total_crossbars"] = report.total_crossbars;
    doc["buffer"] = {{"cnn_training", breakdown_json(report.cnn)},
                     {"attacknet", breakdown_json(report.attack)}};
    doc["attack_to_cnn_ratio"] = round6(report.ratio);
    sink.write("analysis.json", doc.dump(2) + "\n");
  }
  if (sink.to_files())
    out << fmt::format("total_crossbars={} buffer_bytes_cnn={} buffer_bytes_attack={} "
                       "attack_to_cnn_ratio={}\n",
                       report.total_crossbars, report.buffer_bytes_cnn,
                       report.buffer_bytes_attack, num(report.ratio));
  return kExitOk;
}

json energy_json(const EnergyBreakdown& e) {
  return {{"adc", round6(e.adc)},           {"dac", round6(e.dac)},
          {"buffer", round6(e.buffer)},     {"crossbar", round6(e.crossbar)},
          {"others", round6(e.others)},     {"total", round6(e.total())}};
}

int iterations_of(const NetworkSpec& net) { return std::max(1, net.attack.iterations); }

int cmd_schedule(const Manifest& m, std::ostream& out) {
  const NetworkSpec net = resolve_net(m.net);
  const HardwareConfig hw = resolve_hw(m.hw);
  const CrossbarGeometry geom;
  const auto capacity = effective_capacity(hw);
  const auto trace = schedule(net, geom, capacity, m.copies, m.batches, m.replication);
  const auto report = metrics(trace, hw, net, iterations_of(net));
  const auto digest = digest_hex(fnv1a(manifest_text(m, net, {hw})));
  const double tput = throughput(trace, hw.cycle_time_s, net.batch_size);
  Sink sink(m.out_dir, out);

  sink.write("trace.csv", "# manifest_digest=" + digest + "\n" + to_csv(trace));
  if (m.format == "csv") {
    std::string csv = "# manifest_digest=" + digest + "\n";
    csv += "metric,value\n";
    csv += fmt::format("capacity,{}\ncopies,{}\nbatches,{}\ntotal_cycles,{}\noverwrites,{}\n",
                       capacity, m.copies, m.batches, trace.total_cycles, trace.overwrite_count);
    csv += fmt::format("throughput_img_per_s,{}\nruntime_s,{}\nops,{}\npe_gops_per_w,{}\n"
                       "ce_gops_per_mm2,{}\ntotal_power_w,{}\ntotal_area_mm2,{}\n",
                       num(tput), num(report.runtime_s), report.ops, num(report.pe),
                       num(report.ce), num(report.total_power_w), num(report.total_area_mm2));
    csv += fmt::format("energy_adc_j,{}\nenergy_dac_j,{}\nenergy_buffer_j,{}\n"
                       "energy_crossbar_j,{}\nenergy_others_j,{}\nenergy_total_j,{}\n",
                       num(report.energy.adc), num(report.energy.dac), num(report.energy.buffer),
                       num(report.energy.crossbar), num(report.energy.others),
                       num(report.energy.total()));
    sink.write("metrics.csv", csv);
  } else {
    json doc;
    doc["manifest_digest"] = digest;
    doc["network"] = net.name;
    doc["design_point"] = std::string(to_string(hw.design_point));
    doc["storage"] = std::string(to_string(hw.storage));
    doc["capacity"] = capacity;
    doc["copies"] = m.copies;
    doc["batches"] = m.batches;
    doc["total_cycles"] = trace.total_cycles;
    doc["overwrites"] = trace.overwrite_count;
    doc["batch_end_cycles"] = trace.batch_end_cycles;
    doc["throughput_img_per_s"] = round6(tput);
    doc["runtime_s"] = round6(report.runtime_s);
    doc["ops"] = report.ops;
    doc["pe_gops_per_w"] = round6(report.pe);
    doc["ce_gops_per_mm2"] = round6(report.ce);
    doc["total_power_w"] = round6(report.total_power_w);
    doc["total_area_mm2"] = round6(report.total_area_mm2);
    doc["energy_j"] = energy_json(report.energy);
    sink.write("metrics.json", doc.dump(2) + "\n");
  }
  if (sink.to_files())
    out << fmt::format("total_cycles={} overwrites={} throughput_img_per_s={}\n",
                       trace.total_cycles, trace.overwrite_count, num(tput));
  return kExitOk;
}

struct CompareRow {
  std::string design;
  HardwareConfig hw;
  PipelineTrace trace;
  MetricsReport metrics;
};

int cmd_compare(const Manifest& m, std::ostream& out, std::ostream& err) {
  if (m.designs.size() < 2) {
    err << "compare needs at least two design points\n";
    return kExitUsage;
  }
  const NetworkSpec net = resolve_net(m.net);
  const CrossbarGeometry geom;
  const int iterations = iterations_of(net);

  const HardwareConfig base_hw = hardware_preset("baseline");
  const auto base_trace =
      schedule(net, geom, effective_capacity(base_hw), m.copies, m.batches, m.replication);
  const auto base = metrics(base_trace, base_hw, net, iterations);

  std::vector<CompareRow> rows;
  std::vector<HardwareConfig> configs;
  for (const auto& d : m.designs) {
    CompareRow row;
    row.design = d;
    row.hw = resolve_hw(d);
    try {
      row.trace = schedule(net, geom, effective_capacity(row.hw), m.copies, m.batches,
                           m.replication);
    } catch (const ScheduleError& e) {
      throw ScheduleError(fmt::format("design {}: {}", d, e.what()), e.layer());
    }
    row.metrics = metrics(row.trace, row.hw, net, iterations, base.runtime_s);
    configs.push_back(row.hw);
    rows.push_back(std::move(row));
  }
  const auto digest = digest_hex(fnv1a(manifest_text(m, net, configs)));

  auto overwrite_ratio = [&](const MetricsReport& r) {
    if (base.overwrites == 0) return r.overwrites == 0 ? 1.0 : static_cast<double>(r.overwrites);
    return static_cast<double>(r.overwrites) / base.overwrites;
  };

  Sink sink(m.out_dir, out);
  if (m.format == "json") {
    json doc;
    doc["manifest_digest"] = digest;
    doc["network"] = net.name;
    doc["rows"] = json::array();
    for (const auto& r : rows) {
      const auto& x = r.metrics;
      const double total = x.energy.total();
      doc["rows"].push_back(
          {{"design", r.design},
           {"storage", std::string(to_string(r.hw.storage))},
           {"crossbars", r.hw.crossbar_count()},
           {"effective_capacity", effective_capacity(r.hw)},
           {"total_cycles", r.trace.total_cycles},
           {"overwrites", x.overwrites},
           {"overwrite_ratio", round6(overwrite_ratio(x))},
           {"speedup", round6(x.speedup)},
           {"pe_gops_per_w", round6(x.pe)},
           {"ce_gops_per_mm2", round6(x.ce)},
           {"pe_norm", round6(x.pe / base.pe)},
           {"ce_norm", round6(x.ce / base.ce)},
           {"energy_j", energy_json(x.energy)},
           {"adc_dac_share", round6(total > 0 ? (x.energy.adc + x.energy.dac) / total : 0.0)}});
    }
    sink.write("comparison.json", doc.dump(2) + "\n");
  } else {
    std::string csv = "# manifest_digest=" + digest + "\n";
    csv += "design,storage,crossbars,effective_capacity,total_cycles,overwrites,overwrite_ratio,"
           "speedup,pe_gops_per_w,ce_gops_per_mm2,pe_norm,ce_norm,energy_adc_j,energy_dac_j,"
           "energy_buffer_j,energy_crossbar_j,energy_others_j,energy_total_j,adc_dac_share\n";
    for (const auto& r : rows) {
      const auto& x = r.metrics;
      const double total = x.energy.total();
      csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.design,
                         to_string(r.hw.storage), r.hw.crossbar_count(), effective_capacity(r.hw),
                         r.trace.total_cycles, x.overwrites, num(overwrite_ratio(x)),
                         num(x.speedup), num(x.pe), num(x.ce), num(x.pe / base.pe),
                         num(x.ce / base.ce), num(x.energy.adc), num(x.energy.dac),
                         num(x.energy.buffer), num(x.energy.crossbar), num(x.energy.others),
                         num(total),
                         num(total > 0 ? (x.energy.adc + x.energy.dac) / total : 0.0));
    }
    sink.write("comparison.csv", csv);
  }
  if (sink.to_files())
    for (const auto& r : rows)
      out << fmt::format("{}: speedup={} overwrites={}\n", r.design, num(r.metrics.speedup),
                         r.metrics.overwrites);
  return kExitOk;
}

std::vector<Eigen::VectorXd> random_images(const NetworkSpec& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> images;
  for (int i = 0; i < net.batch_size; ++i) {
    Eigen::VectorXd img(net.input.count());
    for (Eigen::Index k = 0; k < img.size(); ++k) img(k) = uniform01(rng);
    images.push_back(std::move(img));
  }
  return images;
}

int cmd_train(const Manifest& m, std::ostream& out) {
  const NetworkSpec net = resolve_net(m.net);
  const HardwareConfig hw = resolve_hw(m.hw);
  const CrossbarGeometry geom;
  const auto weights = m.weights.empty() ? random_weights<double>(net, m.seed)
                                         : weights_from_tensors(net, read_tensors(m.weights));
  const auto images = m.input.empty() ? random_images(net, m.seed + 1)
                                      : images_from_tensors(net, read_tensors(m.input));
  AttackConfig attack = net.attack;
  if (m.iterations > 0) attack.iterations = m.iterations;

  TrainLog<double> log;
  if (m.quantized) {
    const CrossbarProducts products(weights, geom, hw.storage);
    log = train(net, weights, std::span<const Eigen::VectorXd>(images), attack, products);
  } else {
    log = train(net, weights, std::span<const Eigen::VectorXd>(images), attack);
  }

  Manifest keyed = m;
  keyed.weights = digest_hex(weights.digest());
  const auto digest = digest_hex(fnv1a(manifest_text(keyed, net, {hw})));
  int first_hit = 0;
  for (const auto& rec : log.iterations)
    if (rec.misclassified) {
      first_hit = rec.iteration;
      break;
    }

  Sink sink(m.out_dir, out);
  if (m.format == "json") {
    json doc;
    doc["manifest_digest"] = digest;
    doc["network"] = net.name;
    doc["quantized"] = m.quantized;
    doc["first_misclassified_iteration"] = first_hit;
    doc["iterations"] = json::array();
    for (const auto& rec : log.iterations)
      doc["iterations"].push_back({{"iteration", rec.iteration},
                                   {"loss", round6(rec.loss)},
                                   {"hit_rate", round6(rec.hit_rate)},
                                   {"misclassified", rec.misclassified}});
    sink.write("train_log.json", doc.dump(2) + "\n");
  } else {
    std::string csv = "# manifest_digest=" + digest + "\n";
    csv += "iteration,loss,hit_rate,misclassified\n";
    for (const auto& rec : log.iterations)
      csv += fmt::format("{},{},{},{}\n", rec.iteration, num(rec.loss), num(rec.hit_rate),
                         rec.misclassified ? 1 : 0);
    sink.write("train_log.csv", csv);
  }
  if (sink.to_files()) {
    Tensor mask;
    mask.dims = {static_cast<std::uint32_t>(net.input.height),
                 static_cast<std::uint32_t>(net.input.width),
                 static_cast<std::uint32_t>(net.input.channels)};
    for (Eigen::Index i = 0; i < log.final_mask.size(); ++i)
      mask.data.push_back(static_cast<float>(log.final_mask(i)));
    write_tensors(fs::path(sink.dir()) / "mask.bin", {mask});
    out << fmt::format("iterations={} first_misclassified_iteration={} final_loss={}\n",
                       log.iterations.size(), first_hit,
                       num(log.iterations.empty() ? 0.0 : log.iterations.back().loss));
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crossbar accelerator simulator for adversarial perturbation training", "a3sim"};
  app.require_subcommand(1, 1);
  Manifest m;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--net", m.net, "Network config path or built-in name")->required();
    sub->add_option("--hw", m.hw, "Hardware preset or config path")->capture_default_str();
    sub->add_option("--replication", m.replication, "Default per-layer replication")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--out", m.out_dir, "Output directory (stdout when omitted)");
    sub->add_option("--seed", m.seed, "Random seed")->capture_default_str();
  };

  auto* analyze_cmd = app.add_subcommand("analyze", "Crossbar and buffer requirements");
  add_common(analyze_cmd);
  analyze_cmd->add_option("--format", m.format, "json or csv (default json)")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* schedule_cmd = app.add_subcommand("schedule", "Cycle-level trace and metrics");
  add_common(schedule_cmd);
  schedule_cmd->add_option("--copies", m.copies, "Network copies")->check(CLI::PositiveNumber);
  schedule_cmd->add_option("--batches", m.batches, "Batches")->check(CLI::PositiveNumber);
  schedule_cmd->add_option("--format", m.format, "Metrics format: json or csv (default json)")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* compare_cmd = app.add_subcommand("compare", "Compare design points against baseline");
  add_common(compare_cmd);
  compare_cmd->add_option("--design", m.designs, "Design points (comma separated)")
      ->delimiter(',')
      ->default_val(std::vector<std::string>{"baseline", "a3p", "a3r", "a3px", "a3rx"});
  compare_cmd->add_option("--copies", m.copies, "Network copies")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--batches", m.batches, "Batches")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--format", m.format, "csv or json (default csv)")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* train_cmd = app.add_subcommand("train", "Run the perturbation training loop");
  add_common(train_cmd);
  train_cmd->add_option("--weights", m.weights, "Weight tensor file (random when omitted)");
  train_cmd->add_option("--input", m.input, "Clean input tensor file (random when omitted)");
  train_cmd->add_option("--iterations", m.iterations, "Override the configured iteration count")
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--quantized", m.quantized, "Run products through the crossbar datapath");
  train_cmd->add_option("--format", m.format, "csv or json (default csv)")
      ->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (analyze_cmd->parsed()) {
      m.command = "analyze";
      if (m.format.empty()) m.format = "json";
      return cmd_analyze(m, out);
    }
    if (schedule_cmd->parsed()) {
      m.command = "schedule";
      if (m.format.empty()) m.format = "json";
      return cmd_schedule(m, out);
    }
    if (compare_cmd->parsed()) {
      m.command = "compare";
      if (m.format.empty()) m.format = "csv";
      return cmd_compare(m, out, err);
    }
    m.command = "train";
    if (m.format.empty()) m.format = "csv";
    return cmd_train(m, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what();
    if (e.line() > 0) err << " (line " << e.line() << ")";
    err << "\n";
    return kExitUsage;
  } catch (const TensorFormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ScheduleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace a3
