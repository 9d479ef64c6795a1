#include "a3sim/hwmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "a3sim/error.hpp"

namespace a3 {

using json = nlohmann::ordered_json;

std::string_view to_string(DesignPoint point) {
  switch (point) {
    case DesignPoint::baseline: return "baseline";
    case DesignPoint::a3p: return "a3p";
    case DesignPoint::a3r: return "a3r";
    case DesignPoint::a3px: return "a3px";
    case DesignPoint::a3rx: return "a3rx";
    case DesignPoint::custom: return "custom";
  }
  return "custom";
}

DesignPoint design_point_from_string(std::string_view text) {
  for (auto p : {DesignPoint::baseline, DesignPoint::a3p, DesignPoint::a3r, DesignPoint::a3px,
                 DesignPoint::a3rx, DesignPoint::custom})
    if (to_string(p) == text) return p;
  throw ParseError(fmt::format("unknown design point '{}'", text), "design_point");
}

EnergyCategory category_of(std::string_view name) {
  if (name == "adc") return EnergyCategory::adc;
  if (name == "dac") return EnergyCategory::dac;
  if (name == "crossbar") return EnergyCategory::crossbar;
  if (name == "edram" || name == "input_register" || name == "output_register")
    return EnergyCategory::buffer;
  return EnergyCategory::others;
}

const ComponentSpec& HardwareConfig::component(std::string_view name) const {
  for (const auto& c : components)
    if (c.name == name) return c;
  throw ShapeError(fmt::format("hardware config has no '{}' component", name));
}

void HardwareConfig::validate() const {
  for (const auto& c : components)
    if (c.unit_power_w < 0 || c.unit_area_mm2 < 0 || c.count < 0)
      throw ShapeError(fmt::format("component '{}' has a negative value", c.name));
  const auto n = component("crossbar").count;
  if (component("dac").count != n || component("adc").count != n)
    throw ShapeError("crossbar, dac and adc counts must be equal");
  if (!(cycle_time_s > 0)) throw ShapeError("cycle time must be positive");
}

double total_power(const HardwareConfig& config) {
  double sum = 0.0;
  for (const auto& c : config.components) sum += c.total_power();
  return sum;
}

double total_area(const HardwareConfig& config) {
  double sum = 0.0;
  for (const auto& c : config.components) sum += c.total_area();
  return sum;
}

Bundle bundle(const HardwareConfig& config) {
  Bundle b;
  for (const char* name : {"crossbar", "dac", "adc"}) {
    const auto& c = config.component(name);
    b.power_w += c.unit_power_w;
    b.area_mm2 += c.unit_area_mm2;
  }
  return b;
}

namespace {

constexpr std::int64_t kBaselineBundles = 16128;

std::vector<ComponentSpec> bundle_components(std::int64_t count) {
  return {
      {"crossbar", 0.0003, 0.000025, count},
      {"dac", 0.0005, 0.00002125, count},
      {"adc", 0.002, 0.0012, count},
  };
}

HardwareConfig with_bundles(std::vector<ComponentSpec> buffers, std::int64_t count,
                            StorageMode storage, DesignPoint point) {
  HardwareConfig cfg;
  cfg.components = std::move(buffers);
  for (auto& c : bundle_components(count)) cfg.components.push_back(std::move(c));
  cfg.storage = storage;
  cfg.design_point = point;
  return cfg;
}

bool is_buffer(const ComponentSpec& c) { return category_of(c.name) == EnergyCategory::buffer; }

}  // namespace

HardwareConfig baseline_config() {
  // Register values follow the row totals (0.037 W, 0.175 mm^2) where unit and total disagree.
  return with_bundles({{"edram", 4.49, 16.364, 1},
                       {"output_register", 0.037, 0.175, 1},
                       {"input_register", 0.037, 0.175, 1}},
                      kBaselineBundles, StorageMode::dual, DesignPoint::baseline);
}

std::vector<ComponentSpec> reduced_buffers() {
  return {{"edram", 1.36, 2.45, 1},
          {"output_register", 0.01, 0.01, 1},
          {"input_register", 0.01, 0.01, 1}};
}

HardwareConfig derive_design_point(const HardwareConfig& baseline,
                                   const std::vector<ComponentSpec>& reduced, Budget budget,
                                   StorageMode storage) {
  double freed_power = 0.0;
  double freed_area = 0.0;
  for (const auto& c : baseline.components)
    if (is_buffer(c)) {
      freed_power += c.total_power();
      freed_area += c.total_area();
    }
  for (const auto& c : reduced) {
    freed_power -= c.total_power();
    freed_area -= c.total_area();
  }
  const Bundle b = bundle(baseline);
  const double freed = budget == Budget::same_power ? freed_power : freed_area;
  const double unit = budget == Budget::same_power ? b.power_w : b.area_mm2;
  if (!(freed > 0.0))
    throw DerivationError(fmt::format("reduced buffers free no {} ({:.6g})",
                                      budget == Budget::same_power ? "power" : "area", freed));
  if (!(unit > 0.0)) throw DerivationError("bundle cost must be positive");
  // The small epsilon keeps exact quotients from flooring one short in binary arithmetic.
  const auto extra = static_cast<std::int64_t>(std::floor(freed / unit + 1e-9));

  HardwareConfig out;
  out.storage = storage;
  out.cycle_time_s = baseline.cycle_time_s;
  out.components = reduced;
  for (const auto& c : baseline.components) {
    if (is_buffer(c)) continue;
    ComponentSpec copy = c;
    const auto cat = category_of(c.name);
    if (cat == EnergyCategory::crossbar || cat == EnergyCategory::dac || cat == EnergyCategory::adc)
      copy.count += extra;
    out.components.push_back(copy);
  }
  if (budget == Budget::same_power)
    out.design_point = storage == StorageMode::dual ? DesignPoint::a3p : DesignPoint::a3px;
  else
    out.design_point = storage == StorageMode::dual ? DesignPoint::a3r : DesignPoint::a3rx;
  return out;
}

HardwareConfig hardware_preset(std::string_view name) {
  const auto point = design_point_from_string(name);
  switch (point) {
    case DesignPoint::baseline: return baseline_config();
    case DesignPoint::a3p:
      return with_bundles(reduced_buffers(), 17265, StorageMode::dual, point);
    case DesignPoint::a3px:
      return with_bundles(reduced_buffers(), 17265, StorageMode::single, point);
    case DesignPoint::a3r:
      return with_bundles(reduced_buffers(), 27553, StorageMode::dual, point);
    case DesignPoint::a3rx:
      return with_bundles(reduced_buffers(), 27553, StorageMode::single, point);
    case DesignPoint::custom: break;
  }
  throw ParseError(fmt::format("no built-in hardware preset '{}'", name), "hw");
}

std::vector<std::string> hardware_preset_names() {
  return {"baseline", "a3p", "a3r", "a3px", "a3rx"};
}

HardwareConfig parse_hardware(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ParseError(fmt::format("hardware config: syntax error at line {}", line), "", line);
  }
  if (!doc.is_object()) throw ParseError("hardware config must be a JSON object", "");

  HardwareConfig cfg;
  try {
    if (doc.contains("storage")) cfg.storage = storage_mode_from_string(doc["storage"].get<std::string>());
    if (doc.contains("design_point"))
      cfg.design_point = design_point_from_string(doc["design_point"].get<std::string>());
    if (doc.contains("cycle_time_s")) cfg.cycle_time_s = doc["cycle_time_s"].get<double>();
    if (!doc.contains("components") || !doc["components"].is_array())
      throw ParseError("hardware config: missing 'components' array", "components");
    std::size_t i = 0;
    for (const auto& item : doc["components"]) {
      const std::string where = fmt::format("components[{}]", i++);
      for (const char* key : {"name", "unit_power_w", "unit_area_mm2", "count"})
        if (!item.contains(key))
          throw ParseError(fmt::format("{}: missing field '{}'", where, key),
                           where + "." + key);
      if (!item["count"].is_number_integer())
        throw ParseError(where + ".count: expected an integer", where + ".count");
      cfg.components.push_back({item["name"].get<std::string>(),
                                item["unit_power_w"].get<double>(),
                                item["unit_area_mm2"].get<double>(),
                                item["count"].get<std::int64_t>()});
    }
  } catch (const json::type_error& e) {
    throw ParseError(fmt::format("hardware config: {}", e.what()), "");
  }
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    throw ParseError(fmt::format("hardware config: {}", e.what()), "components");
  }
  return cfg;
}

HardwareConfig load_hardware(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open hardware config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_hardware(buf.str());
}

std::string emit_hardware(const HardwareConfig& config) {
  json doc = json::object();
  doc["design_point"] = std::string(to_string(config.design_point));
  doc["storage"] = std::string(to_string(config.storage));
  doc["cycle_time_s"] = config.cycle_time_s;
  doc["components"] = json::array();
  for (const auto& c : config.components)
    doc["components"].push_back({{"name", c.name},
                                 {"unit_power_w", c.unit_power_w},
                                 {"unit_area_mm2", c.unit_area_mm2},
                                 {"count", c.count}});
  return doc.dump(2) + "\n";
}

std::int64_t effective_capacity(const HardwareConfig& config) {
  const auto n = config.crossbar_count();
  return config.storage == StorageMode::dual ? n / 2 : n;
}

std::int64_t forward_ops(const NetworkSpec& net) {
  std::int64_t ops = 0;
  for (const auto& layer : net.layers) {
    const Dims out = layer.conv_output();
    ops += 2 * layer.matrix_rows() * layer.matrix_cols() * out.height * out.width;
  }
  return ops;
}

std::int64_t count_ops(const NetworkSpec& net, std::int64_t images, std::int64_t iterations,
                       std::int64_t batches) {
  const std::int64_t fp = forward_ops(net);
  const std::int64_t per_batch = fp + 2 * net.input.count();
  return iterations * (images * fp + batches * per_batch);
}

EnergyBreakdown energy_breakdown(const PipelineTrace& trace, const HardwareConfig& config) {
  EnergyBreakdown e;
  if (trace.events.empty() && trace.total_cycles == 0) return e;
  if (trace.capacity > effective_capacity(config))
    throw ShapeError(fmt::format("trace scheduled for {} crossbars but the config provides {}",
                                 trace.capacity, effective_capacity(config)));

  const double t = config.cycle_time_s;
  const double xbar_per_unit = config.storage == StorageMode::dual ? 2.0 : 1.0;
  const auto& xbar = config.component("crossbar");
  const auto& dac = config.component("dac");
  const auto& adc = config.component("adc");

  double active_units = 0.0;
  for (const auto& ev : trace.events) {
    if (ev.action != Action::fp_compute && ev.action != Action::ep_compute &&
        ev.action != Action::input_error)
      continue;
    if (ev.layer < 1 || ev.layer > static_cast<int>(trace.layer_costs.size()))
      throw ShapeError(fmt::format("trace event references layer {}", ev.layer));
    active_units += static_cast<double>(trace.layer_costs[static_cast<std::size_t>(ev.layer - 1)]);
  }
  e.crossbar = active_units * xbar_per_unit * xbar.unit_power_w * t;
  e.dac = active_units * dac.unit_power_w * t;
  e.adc = active_units * adc.unit_power_w * t;

  double buffer_power = 0.0;
  for (const auto& c : config.components)
    if (category_of(c.name) == EnergyCategory::buffer) buffer_power += c.total_power();
  e.buffer = buffer_power * static_cast<double>(trace.total_cycles) * t;
  e.others = 0.0;
  return e;
}

EnergyBreakdown energy_breakdown(const PipelineTrace& trace, const HardwareConfig& config,
                                 const NetworkSpec& net) {
  if (trace.layer_costs.size() != net.depth())
    throw ShapeError(fmt::format("trace covers {} layers but the net has {}",
                                 trace.layer_costs.size(), net.depth()));
  return energy_breakdown(trace, config);
}

MetricsReport metrics(const PipelineTrace& trace, const HardwareConfig& config,
                      const NetworkSpec& net, std::int64_t iterations,
                      double baseline_runtime_s) {
  MetricsReport m;
  m.total_power_w = total_power(config);
  m.total_area_mm2 = total_area(config);
  m.total_cycles = trace.total_cycles;
  m.overwrites = trace.overwrite_count;
  m.runtime_s = static_cast<double>(iterations) * trace.total_cycles * config.cycle_time_s;
  m.ops = count_ops(net, static_cast<std::int64_t>(trace.batch_size) * trace.batches, iterations,
                    trace.batches);
  const EnergyBreakdown once = energy_breakdown(trace, config, net);
  const double k = static_cast<double>(iterations);
  m.energy = {once.adc * k, once.dac * k, once.buffer * k, once.crossbar * k, once.others * k};
  if (m.runtime_s > 0) {
    const double rate = static_cast<double>(m.ops) / m.runtime_s;
    m.pe = rate / m.total_power_w / 1e9;
    m.ce = rate / m.total_area_mm2 / 1e9;
  }
  m.speedup = baseline_runtime_s > 0 && m.runtime_s > 0 ? baseline_runtime_s / m.runtime_s : 1.0;
  return m;
}

}  // namespace a3
