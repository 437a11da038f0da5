// Command-line front end: topology validation, resource/throughput modeling,
// (C_vec, K_vec) design-space exploration, and dataflow simulation against
// the reference model.
//
// Exit codes: 0 success, 2 input/validation error, 3 infeasible or no
// feasible design point, 4 fidelity thresholds not met.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dla/arch_model.hpp"
#include "dla/dlat.hpp"
#include "dla/dse.hpp"
#include "dla/perf_model.hpp"
#include "dla/simulator.hpp"
#include "dla/stimulus.hpp"
#include "dla/topology.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitFidelity = 4;

// fidelity thresholds enforced by `simulate`
constexpr double kExactMaxRel = 1e-4;
constexpr double kDeviceMeanRel = 1e-2;
constexpr double kArgmaxRatio = 95.0 / 96.0;

dla::Topology resolve_topology(const std::string& spec) {
  if (spec == "alexnet") return dla::builtin_alexnet();
  return dla::load_topology(spec);
}

dla::DeviceSpec resolve_device(const std::string& spec) {
  if (spec == "a10" || spec == "arria10" || spec == "arria10_1150")
    return dla::DeviceSpec::arria10_1150();
  return dla::load_device(spec);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    out.push_back(std::stoi(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  write_file(path, j.dump(2) + "\n");
}

struct ConfigFlags {
  int cvec = 8, kvec = 48, qvec = 4, wvec = 6, lw = 2, lh = 3;
  std::string winograd = "on";

  dla::VectorConfig to_config() const {
    dla::VectorConfig cfg;
    cfg.c_vec = cvec;
    cfg.k_vec = kvec;
    cfg.q_vec = qvec;
    cfg.w_vec = wvec;
    cfg.s_vec = wvec - qvec + 1;
    cfg.l_w = lw;
    cfg.l_h = lh;
    if (winograd != "on" && winograd != "off")
      throw dla::ValidationError(-1, "--winograd must be 'on' or 'off'");
    cfg.winograd = winograd == "on";
    cfg.validate();
    return cfg;
  }

  void add_to(CLI::App* app) {
    app->add_option("--cvec", cvec, "input-depth vector width C_vec");
    app->add_option("--kvec", kvec, "output-depth vector width K_vec");
    app->add_option("--qvec", qvec, "output-column vector width Q_vec");
    app->add_option("--wvec", wvec, "input-column vector width W_vec");
    app->add_option("--lw", lw, "width-wise interleave factor L_w");
    app->add_option("--lh", lh, "height-wise interleave factor L_h");
    app->add_option("--winograd", winograd, "Winograd mode: on|off");
  }
};

int cmd_validate(const std::string& topo_spec, const std::string& out_dir) {
  const dla::Topology t = resolve_topology(topo_spec);
  const dla::ShapeTable shapes = dla::infer_shapes(t);
  const auto names = dla::layer_display_names(t);

  std::printf("%-10s %-16s %-14s %-14s %14s\n", "layer", "kind", "input", "output",
              "macs");
  for (std::size_t i = 0; i < t.layers.size(); ++i) {
    char in[32], out[32];
    std::snprintf(in, sizeof in, "%dx%dx%d", shapes.rows[i].in.c, shapes.rows[i].in.h,
                  shapes.rows[i].in.w);
    std::snprintf(out, sizeof out, "%dx%dx%d", shapes.rows[i].out.c,
                  shapes.rows[i].out.h, shapes.rows[i].out.w);
    std::printf("%-10s %-16s %-14s %-14s %14llu\n", names[i].c_str(),
                dla::layer_kind_name(t.layers[i].kind), in, out,
                static_cast<unsigned long long>(shapes.rows[i].macs));
  }
  std::printf("total MACs: %llu\n",
              static_cast<unsigned long long>(shapes.total_macs()));

  if (!out_dir.empty()) {
    nlohmann::ordered_json j;
    j["topology"] = dla::topology_to_json(t);
    j["layers"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < t.layers.size(); ++i) {
      nlohmann::ordered_json l;
      l["name"] = names[i];
      l["input"] = {shapes.rows[i].in.c, shapes.rows[i].in.h, shapes.rows[i].in.w};
      l["output"] = {shapes.rows[i].out.c, shapes.rows[i].out.h, shapes.rows[i].out.w};
      l["macs"] = shapes.rows[i].macs;
      j["layers"].push_back(std::move(l));
    }
    std::filesystem::create_directories(out_dir);
    write_json(out_dir + "/validate.json", j);
  }
  return kExitOk;
}

const char* resource_name(dla::Resource r) {
  switch (r) {
    case dla::Resource::Dsp: return "DSP";
    case dla::Resource::M20k: return "M20K";
    case dla::Resource::None: break;
  }
  return "none";
}

int cmd_model(const std::string& topo_spec, const std::string& dev_spec,
              const ConfigFlags& flags, double derate, const std::string& out_dir) {
  const dla::Topology t = resolve_topology(topo_spec);
  const dla::DlaLayout layout = dla::build_dla_layout(t);
  const dla::DeviceSpec dev = resolve_device(dev_spec);
  const dla::VectorConfig cfg = flags.to_config();

  const dla::ResourceReport rr = dla::check_fit(cfg, layout, dev);
  std::printf("configuration: C_vec=%d K_vec=%d Q_vec=%d W_vec=%d L_w=%d L_h=%d "
              "winograd=%s\n",
              cfg.c_vec, cfg.k_vec, cfg.q_vec, cfg.w_vec, cfg.l_w, cfg.l_h,
              cfg.winograd ? "on" : "off");
  std::printf("resources: %lld DSPs (budget %d), %lld M20Ks (%lld stream + %lld "
              "filter cache, budget %d)\n",
              static_cast<long long>(rr.n_dsps), dev.dsp_count,
              static_cast<long long>(rr.m20k_total()),
              static_cast<long long>(rr.m20k_stream),
              static_cast<long long>(rr.m20k_filter_cache), dev.m20k_count);
  for (const auto& w : rr.warnings) std::printf("warning: %s\n", w.c_str());

  nlohmann::ordered_json j;
  j["config"] = {{"c_vec", cfg.c_vec}, {"k_vec", cfg.k_vec},
                 {"q_vec", cfg.q_vec}, {"w_vec", cfg.w_vec},
                 {"l_w", cfg.l_w},     {"l_h", cfg.l_h},
                 {"winograd", cfg.winograd}};
  j["resources"] = {{"dsps", rr.n_dsps},
                    {"m20k_stream", rr.m20k_stream},
                    {"m20k_filter_cache", rr.m20k_filter_cache},
                    {"m20k_total", rr.m20k_total()},
                    {"feasible", rr.feasible},
                    {"limiting_resource", resource_name(rr.limiting_resource)}};

  if (!rr.feasible) {
    std::printf("infeasible: limiting resource %s\n",
                resource_name(rr.limiting_resource));
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      write_json(out_dir + "/model.json", j);
    }
    return kExitInfeasible;
  }

  const dla::SystemPerf sp = dla::system_throughput(cfg, layout, dev, derate);
  std::fputs(dla::gflops_table(sp).c_str(), stdout);
  std::printf("cycles/image: %.1f\n", sp.total_cycles_per_image);
  std::printf("device throughput: %.1f img/s\n", sp.img_per_s_device);
  std::printf("system throughput (derate %.0f%%): %.1f img/s, %.2f img/s/W\n",
              100.0 * derate, sp.img_per_s_system, sp.img_per_s_per_watt);

  j["performance"] = dla::perf_to_json(sp);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_json(out_dir + "/model.json", j);
  }
  return kExitOk;
}

int cmd_dse(const std::string& topo_spec, const std::string& dev_spec,
            const std::string& cvec_list, const std::string& kvec_list,
            const ConfigFlags& flags, double derate, const std::string& out_dir) {
  const dla::Topology t = resolve_topology(topo_spec);
  const dla::DlaLayout layout = dla::build_dla_layout(t);
  const dla::DeviceSpec dev = resolve_device(dev_spec);

  dla::DseFixed fixed;
  fixed.q_vec = flags.qvec;
  fixed.w_vec = flags.wvec;
  fixed.winograd = flags.winograd == "on";
  fixed.l_w = flags.lw;
  fixed.l_h = flags.lh;
  fixed.derate = derate;

  const std::vector<int> c_range =
      cvec_list.empty() ? dla::default_c_range() : parse_int_list(cvec_list);
  const std::vector<int> k_range =
      kvec_list.empty() ? dla::default_k_range() : parse_int_list(kvec_list);

  const auto points = dla::sweep_grid(layout, dev, fixed, c_range, k_range);
  const std::string csv = dla::dse_csv(points);
  const std::string csv_path =
      (out_dir.empty() ? std::string(".") : out_dir) + "/dse.csv";
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  write_file(csv_path, csv);
  std::printf("%zu grid points written to %s\n", points.size(), csv_path.c_str());

  try {
    const dla::DsePoint& best = dla::select_best(points);
    std::printf("best: C_vec=%d K_vec=%d  %.1f img/s system  (%lld DSPs, %lld "
                "M20Ks)\n",
                best.cfg.c_vec, best.cfg.k_vec, best.img_per_s_system(),
                static_cast<long long>(best.resources.n_dsps),
                static_cast<long long>(best.resources.m20k_total()));
  } catch (const std::runtime_error& e) {
    std::printf("%s\n", e.what());
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& topo_spec, const std::string& dev_spec,
                 const ConfigFlags& flags, int images, const std::string& fidelity,
                 std::uint64_t seed, const std::string& weights_manifest,
                 const std::string& out_dir, bool dump_tensors) {
  const dla::Topology t = resolve_topology(topo_spec);
  const dla::DlaLayout layout = dla::build_dla_layout(t);
  const dla::VectorConfig cfg = flags.to_config();

  std::optional<dla::DeviceSpec> dev;
  if (!dev_spec.empty()) dev = resolve_device(dev_spec);

  dla::Fidelity fid;
  if (fidelity == "exact" || fidelity == "exact_fp32")
    fid = dla::Fidelity::exact_fp32;
  else if (fidelity == "device" || fidelity == "device_fp16_shared_exp")
    fid = dla::Fidelity::device_fp16_shared_exp;
  else
    throw dla::ValidationError(-1, "--fidelity must be exact_fp32 or "
                                   "device_fp16_shared_exp");

  const dla::NetworkWeights w =
      weights_manifest.empty() ? dla::make_random_weights(t, seed)
                               : dla::dlat::load_weights(weights_manifest, t);
  const std::vector<dla::Tensor> imgs = dla::make_random_images(t, images, seed);

  dla::SimOptions opt;
  opt.fidelity = fid;
  opt.compare_reference = true;
  opt.collect_outputs = dump_tensors;
  if (dev) opt.device = &*dev;

  const dla::SimResult r = dla::run_network(cfg, layout, w, imgs, opt);
  for (const auto& warn : r.warnings) std::printf("warning: %s\n", warn.c_str());

  std::printf("%-10s %10s %12s %12s %12s\n", "layer", "cycles", "max_abs",
              "max_rel", "mean_rel");
  for (const auto& l : r.layers)
    std::printf("%-10s %10llu %12.4g %12.4g %12.4g\n", l.name.c_str(),
                static_cast<unsigned long long>(l.cycles), l.err.max_abs,
                l.err.max_rel, l.err.mean_rel);
  std::printf("total cycles: %llu (%.1f per image)\n",
              static_cast<unsigned long long>(r.total_cycles),
              r.images_padded > 0 ? double(r.total_cycles) / r.images_padded : 0.0);

  int agree = 0;
  for (std::size_t i = 0; i < r.argmax.size(); ++i)
    if (r.argmax[i] == r.ref_argmax[i]) ++agree;
  if (!r.argmax.empty())
    std::printf("argmax agreement: %d/%d\n", agree, int(r.argmax.size()));

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_json(out_dir + "/sim.json", dla::sim_to_json(r));
    if (dump_tensors) {
      for (const auto& [name, tensor] : r.outputs)
        dla::dlat::write_tensor(out_dir + "/" + name + "_out.dlat",
                                {std::uint32_t(tensor.shape.c),
                                 std::uint32_t(tensor.shape.h),
                                 std::uint32_t(tensor.shape.w)},
                                tensor.data, dla::dlat::Dtype::f32);
    }
  }

  // threshold evaluation: exact mode bounds the worst element; device mode
  // bounds the per-layer mean on hardware-executed layers plus the final
  // classification agreement
  bool pass = true;
  for (const auto& l : r.layers) {
    if (layout.softmax_index >= 0 && l.layer_index == layout.softmax_index)
      continue;  // host-side reference stage
    if (fid == dla::Fidelity::exact_fp32) {
      if (l.err.max_rel > kExactMaxRel) pass = false;
    } else {
      if (l.err.mean_rel > kDeviceMeanRel) pass = false;
    }
  }
  if (fid == dla::Fidelity::device_fp16_shared_exp && !r.argmax.empty() &&
      double(agree) / double(r.argmax.size()) < kArgmaxRatio)
    pass = false;
  if (!pass) {
    std::printf("fidelity thresholds not met\n");
    return kExitFidelity;
  }
  std::printf("fidelity thresholds met\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep learning accelerator model and simulator"};
  app.require_subcommand(1);

  std::string topo = "alexnet", device = "a10", out_dir;
  double derate = dla::kDefaultDerate;

  auto* validate = app.add_subcommand("validate", "check a topology and print shapes");
  validate->add_option("--topology", topo, "builtin name or JSON path");
  validate->add_option("--out", out_dir, "output directory for JSON reports");

  ConfigFlags model_flags;
  auto* model = app.add_subcommand("model", "resource and throughput model");
  model->add_option("--topology", topo, "builtin name or JSON path");
  model->add_option("--device", device, "device preset or JSON path");
  model->add_option("--derate", derate, "system-level derate fraction");
  model->add_option("--out", out_dir, "output directory for JSON reports");
  model_flags.add_to(model);

  ConfigFlags dse_flags;
  std::string cvec_list, kvec_list;
  auto* dse = app.add_subcommand("dse", "sweep (C_vec, K_vec) design points");
  dse->add_option("--topology", topo, "builtin name or JSON path");
  dse->add_option("--device", device, "device preset or JSON path");
  dse->add_option("--cvec", cvec_list, "comma-separated C_vec values");
  dse->add_option("--kvec", kvec_list, "comma-separated K_vec values");
  dse->add_option("--derate", derate, "system-level derate fraction");
  dse->add_option("--out", out_dir, "output directory for CSV/JSON");
  dse->add_option("--qvec", dse_flags.qvec, "output-column vector width");
  dse->add_option("--wvec", dse_flags.wvec, "input-column vector width");
  dse->add_option("--lw", dse_flags.lw, "width-wise interleave factor");
  dse->add_option("--lh", dse_flags.lh, "height-wise interleave factor");
  dse->add_option("--winograd", dse_flags.winograd, "Winograd mode: on|off");

  ConfigFlags sim_flags;
  int images = 96;
  std::string fidelity = "device_fp16_shared_exp", weights, sim_device;
  std::uint64_t seed = 1;
  bool dump_tensors = false;
  auto* simulate = app.add_subcommand("simulate", "run the dataflow simulator");
  simulate->add_option("--topology", topo, "builtin name or JSON path");
  simulate->add_option("--device", sim_device, "device preset or JSON path (optional)");
  simulate->add_option("--images", images, "number of input images");
  simulate->add_option("--fidelity", fidelity, "exact_fp32 | device_fp16_shared_exp");
  simulate->add_option("--seed", seed, "stimulus seed");
  simulate->add_option("--weights", weights, "DLAT weights manifest (default: seeded)");
  simulate->add_option("--out", out_dir, "output directory for JSON/DLAT dumps");
  simulate->add_flag("--dump-tensors", dump_tensors, "dump intermediates as DLAT");
  sim_flags.add_to(simulate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(topo, out_dir);
    if (model->parsed()) return cmd_model(topo, device, model_flags, derate, out_dir);
    if (dse->parsed())
      return cmd_dse(topo, device, cvec_list, kvec_list, dse_flags, derate, out_dir);
    if (simulate->parsed())
      return cmd_simulate(topo, sim_device, sim_flags, images, fidelity, seed, weights,
                          out_dir, dump_tensors);
  } catch (const dla::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const dla::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const dla::SimError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInfeasible;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return kExitOk;
}
