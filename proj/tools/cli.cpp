#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "graft/augment.hpp"
#include "graft/codec.hpp"
#include "graft/error.hpp"
#include "graft/image.hpp"
#include "graft/injector.hpp"
#include "graft/interpreter.hpp"
#include "graft/kernels.hpp"
#include "graft/random.hpp"
#include "graft/scanner.hpp"
#include "graft/trainer.hpp"
#include "graft/zoo.hpp"

namespace graft::cli {

namespace fs = std::filesystem;

Profile desk_profile() {
  Profile p;
  p.name = "desk";
  p.image_size = 64;
  p.n_per_class = 400;
  p.epochs = 20;
  p.arch = DetectorArch::desk();
  return p;
}

Profile paper_profile() {
  Profile p;
  p.name = "paper";
  p.image_size = 160;
  p.n_per_class = 13394;
  p.epochs = 20;
  p.arch = DetectorArch::reference();
  return p;
}

namespace {

// Independent seeds for the separate random consumers of one run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return splitmix64(seed ^ splitmix64(tag)); }

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

std::vector<fs::path> ppm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::Io, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor load_input(const fs::path& path) {
  const Bytes bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  return decode_tensor(bytes);
}

struct Globals {
  std::uint64_t seed = 0;
  std::string profile = "desk";

  [[nodiscard]] Profile selected() const { return profile == "paper" ? paper_profile() : desk_profile(); }
};

// --- subcommands ------------------------------------------------------------

int cmd_inspect(const std::string& model_path, std::ostream& out) {
  const Graph g = load_model(model_path);
  const auto shapes = infer_shapes(g);
  out << "name\top\tinputs\tshape\tops\n";
  std::uint64_t total = 0;
  for (auto i : canonical_order(g)) {
    const Node& n = g.nodes[i];
    std::vector<const Shape*> in;
    std::string inputs;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const auto& src = g.nodes[n.inputs[k].node].name;
      in.push_back(&shapes.at(src));
      inputs += (k ? "," : "") + src;
    }
    const auto ops = node_ops(n, in, shapes.at(n.name));
    total += ops;
    out << n.name << '\t' << op_name(n.op) << '\t' << (inputs.empty() ? "-" : inputs) << '\t'
        << shape_str(shapes.at(n.name)) << '\t' << ops << '\n';
  }
  const auto io = find_io(g);
  out << "\ninput\t" << io.input_node << '\t' << shape_str(io.input_shape) << '\t' << dtype_name(io.input_dtype)
      << '\n';
  out << "output\t" << io.output_node << '\t' << shape_str(io.output_shape) << '\n';
  out << "nodes\t" << g.nodes.size() << '\n';
  out << "total_ops\t" << total << '\n';
  return kExitOk;
}

int cmd_run(const std::string& model_path, const std::string& input_path, bool resize, const std::string& out_path,
            std::ostream& out) {
  const Graph g = load_model(model_path);
  const auto io = find_io(g);
  Tensor x = load_input(input_path);
  if (x.shape != io.input_shape) {
    if (!resize || x.rank() != 3 || io.input_shape.size() != 3 || x.shape[2] != io.input_shape[2]) {
      throw Error(Errc::ShapeMismatch, "input is " + shape_str(x.shape) + ", model expects " +
                                           shape_str(io.input_shape) + (resize ? "" : " (try --resize)"));
    }
    x = kernels::resize(x, io.input_shape[0], io.input_shape[1], ResizeMode::Bilinear);
  }
  const Tensor y = run_single(g, x);
  std::ostringstream os;
  os << "index\tvalue\n";
  std::size_t best = 0;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    os << i << '\t' << fmt_float(y.values[i]) << '\n';
    if (y.values[i] > y.values[best]) best = i;
  }
  os << "argmax\t" << best << '\n';
  if (out_path.empty()) {
    out << os.str();
  } else {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw Error(Errc::Io, "cannot write " + out_path);
    f << os.str();
  }
  return kExitOk;
}

struct AugmentOptions {
  std::string out;
  std::string triggers_dir;
  std::string bases_dir;
  std::optional<std::size_t> n_per_class;
  std::optional<std::uint32_t> size;
  std::optional<std::size_t> trigger_count;
  std::optional<std::size_t> base_count;
  unsigned workers = 1;
  AugmentParams params;
};

int cmd_augment(const Globals& gl, AugmentOptions o, std::ostream& out) {
  const Profile p = gl.selected();
  const std::uint32_t size = o.size.value_or(p.image_size);
  const std::size_t n = o.n_per_class.value_or(p.n_per_class);

  std::vector<Tensor> bases = synth_corpus(o.base_count.value_or(p.base_images), size, derive_seed(gl.seed, 1));
  if (!o.bases_dir.empty()) {
    for (const auto& f : ppm_files(o.bases_dir)) bases.push_back(read_ppm(f));
  }
  std::vector<Patch> triggers;
  if (!o.triggers_dir.empty()) {
    for (const auto& f : ppm_files(o.triggers_dir)) {
      Tensor rgb = read_ppm(f);
      Tensor alpha = derive_alpha(rgb);
      triggers.push_back({std::move(rgb), std::move(alpha)});
    }
  } else {
    triggers = synth_trigger_photos(o.trigger_count.value_or(p.trigger_photos), 48, derive_seed(gl.seed, 2));
  }
  o.params.seed = derive_seed(gl.seed, 3);
  const Dataset ds = build_dataset(bases, triggers, o.params, n, size, o.workers);
  write_dataset(o.out, ds);
  out << "samples\t" << ds.size() << "\npositives\t" << ds.positives() << "\ntrain\t" << ds.train_count
      << "\nvalidation\t" << ds.size() - ds.train_count << '\n';
  return kExitOk;
}

struct TrainOptions {
  std::string data;
  std::string out;
  std::string report;
  std::string arch_file;
  std::optional<std::uint32_t> epochs;
  TrainConfig config;
};

int cmd_train(const Globals& gl, TrainOptions o, std::ostream& out) {
  const Profile p = gl.selected();
  DetectorArch arch = p.arch;
  if (!o.arch_file.empty()) {
    const Bytes text = read_file(o.arch_file);
    arch = parse_arch(std::string(text.begin(), text.end()));
  }
  const Dataset ds = read_dataset(o.data);
  if (!ds.samples.empty() && ds.samples[0].pixels.shape != Shape{arch.input_size, arch.input_size, 3}) {
    throw Error(Errc::ShapeMismatch, "dataset images are " + shape_str(ds.samples[0].pixels.shape) +
                                         ", detector takes " + std::to_string(arch.input_size) + " px");
  }
  o.config.epochs = o.epochs.value_or(p.epochs);
  o.config.seed = derive_seed(gl.seed, 4);
  const Graph detector = build_detector(arch, derive_seed(gl.seed, 5));
  const TrainReport r = train(detector, ds, o.config);
  save_model(o.out, r.detector);
  if (!o.report.empty()) write_report(o.report, r);
  const auto& last = r.epochs.back();
  out << "epochs\t" << r.epochs.size() << "\ntrain_loss\t" << last.train_loss << "\nprecision\t"
      << last.validation.precision << "\nrecall\t" << last.validation.recall << "\naccuracy\t"
      << last.validation.accuracy << '\n';
  return kExitOk;
}

struct InjectOptions {
  std::string model;
  std::string detector;
  std::optional<std::uint32_t> target_class;
  std::string target_tensor;
  float confidence = 0.99f;
  float threshold = 0.5f;
  float input_scale = 1.0f;
  float input_offset = 0.0f;
  std::string out;
  std::string report;
};

int cmd_inject(const InjectOptions& o, std::ostream& out) {
  PayloadSpec spec;
  spec.detector = load_model(o.detector);
  spec.target_class = o.target_class;
  if (!o.target_tensor.empty()) spec.target_tensor = decode_tensor(read_file(o.target_tensor));
  spec.confidence = o.confidence;
  spec.threshold = o.threshold;
  spec.input_scale = o.input_scale;
  spec.input_offset = o.input_offset;
  auto [bytes, report] = inject(read_file(o.model), spec);
  write_file(o.out, bytes);
  const std::string text = format_injection_report(report);
  if (!o.report.empty()) {
    std::ofstream f(o.report, std::ios::trunc);
    if (!f) throw Error(Errc::Io, "cannot write " + o.report);
    f << text;
  }
  out << "nodes\t" << report.old_node_count << " -> " << report.new_node_count << "\npayload_ops\t"
      << report.payload_ops << "\noutput\t" << report.output_name << '\n';
  return kExitOk;
}

int cmd_scan(const std::string& model, const std::string& format, std::ostream& out) {
  const ScanReport r = scan(read_file(model));
  out << format_scan(r, format == "tsv" ? ScanFormat::Tsv : ScanFormat::Lines);
  return r.verdict == Verdict::Suspicious ? kExitSuspicious : kExitOk;
}

int cmd_diff(const std::string& a, const std::string& b, std::ostream& out) {
  out << format_diff(diff(read_file(a), read_file(b)));
  return kExitOk;
}

int cmd_zoo(const Globals& gl, std::size_t count, const std::string& dir, std::ostream& out) {
  const auto zoo = make_zoo(count, gl.seed);
  write_zoo(dir, zoo);
  out << "models\t" << zoo.size() << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph-level payload grafting, detection and tooling for NNIR models", "graft"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals gl;
  app.add_option("--seed", gl.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--profile", gl.profile, "Scale constants")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();

  std::string model, input, out_path, other, format = "lines";
  bool resize = false;

  auto* inspect = app.add_subcommand("inspect", "Node table, I/O signature and op counts");
  inspect->add_option("model", model, "NNIR model")->required();

  auto* run = app.add_subcommand("run", "Execute a model on one input");
  run->add_option("--model", model, "NNIR model")->required();
  run->add_option("--input", input, "PPM image or tensor blob")->required();
  run->add_flag("--resize", resize, "Bilinearly resize the image to the model input");
  run->add_option("--out", out_path, "Write the TSV here instead of standard output");

  AugmentOptions ao;
  auto* augment = app.add_subcommand("augment", "Generate a labeled trigger-detector dataset");
  augment->add_option("--out", ao.out, "Dataset directory")->required();
  augment->add_option("--n-per-class", ao.n_per_class, "Samples per stratum");
  augment->add_option("--size", ao.size, "Image side in pixels");
  augment->add_option("--triggers", ao.triggers_dir, "Directory of trigger photos (PPM, white background)");
  augment->add_option("--trigger-count", ao.trigger_count, "Synthetic trigger photos when --triggers is absent");
  augment->add_option("--bases", ao.bases_dir, "Extra base images (PPM)");
  augment->add_option("--base-count", ao.base_count, "Synthetic base images");
  augment->add_option("--workers", ao.workers, "Generator threads")->check(CLI::PositiveNumber);
  augment->add_option("--zoom-min", ao.params.zoom_min, "Smallest trigger width / image width");
  augment->add_option("--zoom-max", ao.params.zoom_max, "Largest trigger width / image width");
  augment->add_option("--shear", ao.params.shear_max, "Largest absolute shear");
  augment->add_option("--brightness-min", ao.params.brightness_min);
  augment->add_option("--brightness-max", ao.params.brightness_max);
  augment->add_option("--rotation", ao.params.rotation_max_deg, "Largest absolute rotation in degrees");

  TrainOptions to;
  auto* train_cmd = app.add_subcommand("train", "Train a trigger detector");
  train_cmd->add_option("--data", to.data, "Dataset directory from augment")->required();
  train_cmd->add_option("--out", to.out, "Detector model to write")->required();
  train_cmd->add_option("--report", to.report, "Per-epoch metrics TSV");
  train_cmd->add_option("--arch", to.arch_file, "Detector architecture file");
  train_cmd->add_option("--epochs", to.epochs);
  train_cmd->add_option("--lr", to.config.lr)->capture_default_str();
  train_cmd->add_option("--batch-size", to.config.batch_size)->capture_default_str();
  train_cmd->add_option("--workers", to.config.workers)->check(CLI::PositiveNumber);

  InjectOptions io;
  auto* inject_cmd = app.add_subcommand("inject", "Graft a detector-gated payload onto a model");
  inject_cmd->add_option("--model", io.model, "Victim NNIR model")->required();
  inject_cmd->add_option("--detector", io.detector, "Trained detector")->required();
  auto* tc = inject_cmd->add_option("--target-class", io.target_class, "Class to force");
  auto* tt = inject_cmd->add_option("--target-tensor", io.target_tensor, "Raw target output (tensor blob)");
  tc->excludes(tt);
  inject_cmd->add_option("--confidence", io.confidence)->capture_default_str();
  inject_cmd->add_option("--threshold", io.threshold)->capture_default_str();
  inject_cmd->add_option("--input-scale", io.input_scale, "Detector sees input * scale + offset");
  inject_cmd->add_option("--input-offset", io.input_offset);
  inject_cmd->add_option("--out", io.out, "Model to write")->required();
  inject_cmd->add_option("--report", io.report, "Injection report TSV");

  auto* scan_cmd = app.add_subcommand("scan", "Look for grafted bypass structures");
  scan_cmd->add_option("model", model, "NNIR model")->required();
  scan_cmd->add_option("--format", format)->check(CLI::IsMember({"tsv", "lines"}))->capture_default_str();

  auto* diff_cmd = app.add_subcommand("diff", "Structural node-level diff");
  diff_cmd->add_option("a", model, "First model")->required();
  diff_cmd->add_option("b", other, "Second model")->required();

  std::size_t zoo_count = 20;
  auto* zoo_cmd = app.add_subcommand("zoo", "Write random victim models");
  zoo_cmd->add_option("--count", zoo_count)->check(CLI::PositiveNumber)->capture_default_str();
  zoo_cmd->add_option("--out", out_path, "Directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "graft: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (inspect->parsed()) return cmd_inspect(model, out);
    if (run->parsed()) return cmd_run(model, input, resize, out_path, out);
    if (augment->parsed()) return cmd_augment(gl, ao, out);
    if (train_cmd->parsed()) return cmd_train(gl, to, out);
    if (inject_cmd->parsed()) {
      if (!io.target_class && io.target_tensor.empty()) {
        err << "graft: inject needs --target-class or --target-tensor\n";
        return kExitUsage;
      }
      return cmd_inject(io, out);
    }
    if (scan_cmd->parsed()) return cmd_scan(model, format, out);
    if (diff_cmd->parsed()) return cmd_diff(model, other, out);
    if (zoo_cmd->parsed()) return cmd_zoo(gl, zoo_count, out_path, out);
  } catch (const Error& e) {
    err << "graft: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "graft: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace graft::cli
