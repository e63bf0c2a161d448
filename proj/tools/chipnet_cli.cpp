// Command-line surface of the LiDAR drivable-region pipeline.
//
// Exit codes: 0 success, 1 usage or invalid value, 2 I/O failure,
// 3 malformed input data, 4 format/shape mismatch, 5 simulator mismatch
// against the fixed-point reference.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chipnet/chipnet.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitMalformed = 3;
constexpr int kExitMismatch = 4;
constexpr int kExitSimMismatch = 5;

chipnet::PipelineConfig load_config(const std::string& path) {
  chipnet::PipelineConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw chipnet::IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg.apply(chipnet::TomlTable::parse(ss.str()));
  }
  cfg.validate();
  return cfg;
}

chipnet::PointCloud load_cloud(const std::string& path, const std::string& format,
                               chipnet::ParseStats* stats) {
  const auto bytes = chipnet::read_file_bytes(path);
  std::string fmt = format;
  if (fmt == "auto") {
    const auto ext = std::filesystem::path(path).extension().string();
    fmt = (ext == ".csv" || ext == ".txt") ? "csv" : "kitti";
  }
  if (fmt == "csv") {
    return chipnet::parse_csv_points(
        std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path, stats);
  }
  return chipnet::parse_kitti_bin(
      std::span<const std::byte>(reinterpret_cast<const std::byte*>(bytes.data()), bytes.size()),
      path, stats);
}

chipnet::CnwFile load_cnw(const std::string& path) {
  return chipnet::read_cnw(chipnet::read_file_bytes(path));
}

chipnet::Tensor3<float> load_tensor(const std::string& path) {
  return chipnet::tensor3_from_cten(chipnet::read_cten(chipnet::read_file_bytes(path)));
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

int cmd_preprocess(const std::string& input, const std::string& output, const std::string& format,
                   const std::string& config_path, double rotate_deg, bool verbose) {
  const chipnet::PipelineConfig cfg = load_config(config_path);
  chipnet::ParseStats stats;
  const chipnet::PointCloud cloud = load_cloud(input, format, &stats);
  if (verbose && (stats.dropped_nonfinite || stats.clamped_intensity))
    std::cerr << "debug: dropped " << stats.dropped_nonfinite << " non-finite points, clamped "
              << stats.clamped_intensity << " intensities\n";

  const chipnet::CellGrid grid = chipnet::bin_points(cloud, cfg.grid);
  const chipnet::InputTensor plain = chipnet::build_input_tensor(grid, cloud);
  const chipnet::InputTensor tensor =
      rotate_deg == 0.0 ? plain : chipnet::rotate_roi(cloud, cfg.grid, rotate_deg);
  chipnet::write_file_bytes(output, chipnet::write_cten(chipnet::cten_from_tensor3(tensor)));

  if (grid.binned_count > 0) {
    const auto stats_out = chipnet::usage_stats(grid, plain, grid.binned_count);
    std::printf("{\"points\":%zu,\"binned\":%u,\"outside_roi\":%u,\"dropped\":%u,"
                "\"point_usage\":%.6f,\"cell_occupancy\":%.6f}\n",
                cloud.size(), grid.binned_count, grid.outside_roi_count,
                grid.dropped_invalid_count, stats_out.point_usage_fraction,
                stats_out.cell_occupancy_fraction);
  } else {
    std::printf("{\"points\":%zu,\"binned\":0,\"outside_roi\":%u,\"dropped\":%u}\n", cloud.size(),
                grid.outside_roi_count, grid.dropped_invalid_count);
  }
  return 0;
}

int cmd_infer(const std::string& tensor_path, const std::string& weights_path,
              const std::string& mode, const std::string& output) {
  const chipnet::Tensor3<float> tensor = load_tensor(tensor_path);
  const chipnet::CnwFile file = load_cnw(weights_path);
  const auto start = std::chrono::steady_clock::now();
  chipnet::ProbMap prob;
  if (mode == "float") {
    const chipnet::LoadedWeights weights = chipnet::network_from_cnw(file);
    prob = chipnet::float_network_forward(tensor, weights.network).prob;
  } else {
    chipnet::QuantizedNetwork qnet;
    try {
      qnet = chipnet::quantized_network_from_cnw(file);
    } catch (const chipnet::ConfigError& e) {
      throw chipnet::ShapeError(std::string("fixed mode: ") + e.what());
    }
    prob = chipnet::fixed_network_forward(tensor, qnet).prob;
  }
  chipnet::write_file_bytes(output, chipnet::write_cten(chipnet::cten_from_probmap(prob)));
  std::printf("{\"mode\":\"%s\",\"rows\":%d,\"cols\":%d,\"ms\":%.3f}\n", mode.c_str(), prob.rows,
              prob.cols, elapsed_ms(start));
  return 0;
}

int cmd_quantize(const std::string& weights_path, int bits, int frac, int act_bits, int act_frac,
                 const std::string& output) {
  const chipnet::QFormat wq{bits, frac};
  wq.validate();
  const chipnet::QFormat aq{act_bits > 0 ? act_bits : bits,
                            act_frac >= 0 ? act_frac
                                          : chipnet::activation_format_for_bits(
                                                act_bits > 0 ? act_bits : bits)
                                                .fraction_bits};
  aq.validate();
  const chipnet::LoadedWeights weights = chipnet::network_from_cnw(load_cnw(weights_path));
  const chipnet::QuantizedNetwork qnet = chipnet::quantize_network(weights.network, wq, aq);
  chipnet::write_file_bytes(output, chipnet::write_cnw(chipnet::cnw_from_quantized_network(qnet)));

  const auto layer_error = [&](const chipnet::ConvParams& master,
                               const chipnet::QuantizedConv& fixed) {
    double max_err = 0.0;
    for (int o = 0; o < master.out_ch; ++o)
      for (int i = 0; i < master.in_ch; ++i)
        for (int r = 0; r < master.kh; ++r)
          for (int c = 0; c < master.kw; ++c) {
            const double err =
                std::abs(chipnet::dequantize_raw(fixed.at(o, i, r, c), wq) - master.at(o, i, r, c));
            if (err > max_err) max_err = err;
          }
    return max_err;
  };
  std::string errors =
      "\"encoder\":" + std::to_string(layer_error(weights.network.encoder, qnet.encoder));
  for (std::size_t i = 0; i < qnet.blocks.size(); ++i) {
    const double dense = layer_error(weights.network.blocks[i].dense3, qnet.blocks[i].first);
    const double dilated = layer_error(weights.network.blocks[i].dilated3, qnet.blocks[i].second);
    errors += ",\"block" + std::to_string(i) +
              "\":" + std::to_string(std::max(dense, dilated));
  }
  errors += ",\"output\":" + std::to_string(layer_error(weights.network.output, qnet.output));
  std::printf("{\"weight_bits\":%d,\"weight_frac\":%d,\"act_bits\":%d,\"act_frac\":%d,"
              "\"max_err\":{%s}}\n",
              wq.total_bits, wq.fraction_bits, aq.total_bits, aq.fraction_bits, errors.c_str());
  return 0;
}

int cmd_simulate(const std::string& tensor_path, const std::string& weights_path, double clock_mhz,
                 const std::string& trace_path, const std::string& output,
                 const std::string& report_path, std::int64_t swap_overhead) {
  const chipnet::Tensor3<float> tensor = load_tensor(tensor_path);
  const chipnet::CnwFile file = load_cnw(weights_path);
  chipnet::QuantizedNetwork qnet;
  try {
    qnet = chipnet::quantized_network_from_cnw(file);
  } catch (const chipnet::ConfigError& e) {
    throw chipnet::DomainError(std::string("simulate requires fixed-format weights: ") + e.what());
  }

  chipnet::SimConfig sim_cfg;
  sim_cfg.clock_hz = clock_mhz * 1e6;
  sim_cfg.swap_overhead_cycles = swap_overhead;
  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw chipnet::IoError("cannot create " + trace_path);
    trace << "cycle,layer,pass,pixel_index\n";
    sim_cfg.trace = [&trace](const chipnet::FsmState& fsm, std::int64_t cycle) {
      trace << cycle << ',' << fsm.layer_index << ',' << fsm.pass_index << ','
            << fsm.pixel_counter << '\n';
    };
  }

  const chipnet::SimResult sim = chipnet::run_network_sim(tensor, qnet, sim_cfg);
  const chipnet::FixedForwardResult ref = chipnet::fixed_network_forward(tensor, qnet);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < ref.logit_raw.v.size(); ++i)
    if (ref.logit_raw.v[i] != sim.logit_raw.v[i]) ++mismatches;

  if (!output.empty())
    chipnet::write_file_bytes(output, chipnet::write_cten(chipnet::cten_from_probmap(sim.prob)));
  if (!report_path.empty()) chipnet::write_file_text(report_path, sim.report.render_json());
  std::fputs(sim.report.render_text().c_str(), stdout);
  if (mismatches != 0) {
    std::fprintf(stderr, "simulator mismatch: %zu cells differ from the fixed-point reference\n",
                 mismatches);
    return kExitSimMismatch;
  }
  std::printf("bit-exact against the fixed-point reference (%d x %d cells)\n", sim.prob.rows,
              sim.prob.cols);
  return 0;
}

int cmd_postprocess(const std::string& prob_path, const std::string& tensor_path, double thr,
                    const std::string& map_path, const std::string& polygon_path,
                    const std::string& config_path) {
  const chipnet::PipelineConfig cfg = load_config(config_path);
  const chipnet::ProbMap prob =
      chipnet::probmap_from_cten(chipnet::read_cten(chipnet::read_file_bytes(prob_path)));
  const chipnet::Tensor3<float> tensor = load_tensor(tensor_path);

  chipnet::BinaryMask mask = chipnet::threshold_map(prob, thr);
  mask = chipnet::largest_connected_component(mask, cfg.connectivity);
  mask = chipnet::dilate(mask);
  const auto refs = chipnet::column_reference_points(mask, tensor);
  const auto poly = chipnet::build_polygon(refs, cfg.map.x_min, cfg.grid.azimuth_min_deg,
                                           cfg.grid.azimuth_max_deg);
  const chipnet::GridMap map = chipnet::rasterize(poly, cfg.map);

  if (!map_path.empty()) chipnet::write_file_bytes(map_path, chipnet::render_pgm(map));
  if (!polygon_path.empty()) chipnet::write_file_text(polygon_path, chipnet::polygon_to_csv(poly));
  std::size_t drivable = 0;
  for (const auto cell : map.cells)
    if (cell == chipnet::CellState::kDrivable) ++drivable;
  std::printf("{\"reference_points\":%zu,\"vertices\":%zu,\"drivable_cells\":%zu}\n", refs.size(),
              poly ? poly->vertices.size() : 0, drivable);
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& dontcare_path, bool json, bool include_outside_roi) {
  const auto pred = chipnet::mask_from_pgm(chipnet::read_pgm(chipnet::read_file_bytes(pred_path)));
  const auto gt = chipnet::mask_from_pgm(chipnet::read_pgm(chipnet::read_file_bytes(gt_path)));
  if (!pred.mask.same_shape(gt.mask))
    throw chipnet::ShapeError("eval: prediction and ground truth differ in size");
  chipnet::BinaryMask dontcare = pred.dontcare;
  for (std::size_t i = 0; i < dontcare.v.size(); ++i)
    dontcare.v[i] = dontcare.v[i] || gt.dontcare.v[i];
  if (!dontcare_path.empty()) {
    const auto extra = chipnet::read_pgm(chipnet::read_file_bytes(dontcare_path));
    if (extra.height != dontcare.rows || extra.width != dontcare.cols)
      throw chipnet::ShapeError("eval: don't-care mask differs in size");
    for (std::size_t i = 0; i < dontcare.v.size(); ++i)
      dontcare.v[i] = dontcare.v[i] || extra.pixels[i] != 0;
  }
  // Cells the sensor's azimuth wedge cannot see default to don't-care on
  // standard-geometry maps.
  if (!include_outside_roi && dontcare.rows == 800 && dontcare.cols == 400) {
    const chipnet::GridMapConfig map_cfg;
    for (int row = 0; row < 800; ++row)
      for (int col = 0; col < 400; ++col) {
        const double x = map_cfg.cell_x(799 - row);
        const double y = map_cfg.cell_y(399 - col);
        if (std::abs(y) > x) dontcare(row, col) = 1;
      }
  }
  const chipnet::ConfusionCounts counts = chipnet::confusion(pred.mask, gt.mask, &dontcare);
  const chipnet::MetricsReport report = chipnet::metrics(counts);
  if (json)
    std::printf("%s\n", chipnet::render_metrics_json(report, counts).c_str());
  else
    std::fputs(chipnet::render_metrics_table(report).c_str(), stdout);
  return 0;
}

int cmd_train(const std::string& output, const std::string& qat_output,
              const std::string& loss_csv, int epochs, int qat_epochs, int frames,
              std::uint32_t seed, int channels, int blocks, int rows, double bin_deg, int bits) {
  if (epochs < 0 || qat_epochs < 0 || frames <= 0)
    throw chipnet::DomainError("train: epochs must be >= 0 and frames positive");
  chipnet::GridConfig grid;
  grid.rows = rows;
  grid.azimuth_bin_deg = bin_deg;
  grid.validate();

  const auto dataset = chipnet::make_wedge_dataset(frames, grid, seed);
  chipnet::TrainOptions opt;
  opt.epochs = epochs;
  opt.seed = seed;
  opt.channels = channels;
  opt.num_blocks = blocks;
  chipnet::TrainResult stage1 = chipnet::train_toy(dataset, opt);

  std::string csv = "epoch,loss,f1\n";
  for (const auto& e : stage1.history) {
    csv += std::to_string(e.epoch) + "," + std::to_string(e.mean_loss) + "," +
           std::to_string(e.f1) + "\n";
  }
  chipnet::write_file_bytes(
      output, chipnet::write_cnw(chipnet::cnw_from_network(stage1.network)));

  if (qat_epochs > 0) {
    chipnet::TrainOptions qat = opt;
    qat.epochs = qat_epochs;
    qat.quantized = true;
    qat.quant.weight_format = chipnet::weight_format_for_bits(bits);
    qat.quant.act_format = chipnet::activation_format_for_bits(bits);
    qat.initial = &stage1.network;
    const chipnet::TrainResult stage2 = chipnet::train_toy(dataset, qat);
    for (const auto& e : stage2.history) {
      csv += std::to_string(e.epoch + epochs) + "," + std::to_string(e.mean_loss) + "," +
             std::to_string(e.f1) + "\n";
    }
    if (!qat_output.empty())
      chipnet::write_file_bytes(
          qat_output, chipnet::write_cnw(chipnet::cnw_from_network(stage2.network)));
    std::printf("{\"epochs\":%d,\"qat_epochs\":%d,\"final_f1\":%.4f}\n", epochs, qat_epochs,
                stage2.history.empty() ? 0.0 : stage2.history.back().f1);
  } else {
    std::printf("{\"epochs\":%d,\"final_f1\":%.4f}\n", epochs,
                stage1.history.empty() ? 0.0 : stage1.history.back().f1);
  }
  if (!loss_csv.empty()) chipnet::write_file_text(loss_csv, csv);
  return 0;
}

int cmd_stats(const std::string& input, const std::string& format,
              const std::vector<double>& lidar, const std::string& config_path) {
  if (!lidar.empty()) {
    if (lidar.size() != 4)
      throw chipnet::DomainError("stats: --lidar takes N, M, R and PHI");
    const chipnet::ScanRates rates = chipnet::scan_rates(
        chipnet::LidarSpec{static_cast<int>(lidar[0]), lidar[1], lidar[2], lidar[3]});
    std::printf("{\"frames_per_second\":%.6f,\"points_per_frame\":%.3f,"
                "\"azimuthal_resolution_deg\":%.6f,\"polar_resolution_deg\":%.6f}\n",
                rates.frames_per_second, rates.points_per_frame,
                rates.azimuthal_resolution_deg, rates.polar_resolution_deg);
    return 0;
  }
  if (input.empty()) throw chipnet::DomainError("stats: pass --input or --lidar");
  return cmd_preprocess(input, "/dev/null", format, config_path, 0.0, false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ChipNet LiDAR drivable-region pipeline"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Bin a LiDAR frame into the input tensor");
  std::string pre_input, pre_output, pre_format = "auto", pre_config;
  double pre_rotate = 0.0;
  bool pre_verbose = false;
  pre->add_option("--input", pre_input)->required();
  pre->add_option("--output", pre_output)->required();
  pre->add_option("--format", pre_format)->check(CLI::IsMember({"auto", "kitti", "csv"}));
  pre->add_option("--config", pre_config);
  pre->add_option("--rotate", pre_rotate);
  pre->add_flag("--verbose", pre_verbose);

  // infer
  auto* inf = app.add_subcommand("infer", "Run the network on a tensor");
  std::string inf_tensor, inf_weights, inf_mode = "float", inf_output;
  inf->add_option("--tensor", inf_tensor)->required();
  inf->add_option("--weights", inf_weights)->required();
  inf->add_option("--mode", inf_mode)->check(CLI::IsMember({"float", "fixed"}));
  inf->add_option("--output", inf_output)->required();

  // quantize
  auto* qnt = app.add_subcommand("quantize", "Quantize a weight file");
  std::string qnt_weights, qnt_output;
  int qnt_bits = 18, qnt_frac = 14, qnt_act_bits = 0, qnt_act_frac = -1;
  qnt->add_option("--weights", qnt_weights)->required();
  qnt->add_option("--bits", qnt_bits);
  qnt->add_option("--frac", qnt_frac);
  qnt->add_option("--act-bits", qnt_act_bits);
  qnt->add_option("--act-frac", qnt_act_frac);
  qnt->add_option("--output", qnt_output)->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the hardware datapath model");
  std::string sim_tensor, sim_weights, sim_trace, sim_output, sim_report;
  double sim_clock = 350.0;
  std::int64_t sim_swap = 0;
  sim->add_option("--tensor", sim_tensor)->required();
  sim->add_option("--weights", sim_weights)->required();
  sim->add_option("--clock-mhz", sim_clock);
  sim->add_option("--trace", sim_trace);
  sim->add_option("--output", sim_output);
  sim->add_option("--report", sim_report);
  sim->add_option("--swap-overhead", sim_swap);

  // postprocess
  auto* post = app.add_subcommand("postprocess", "Probability map to polygon and grid map");
  std::string post_prob, post_tensor, post_map, post_poly, post_config;
  double post_thr = 0.5;
  post->add_option("--prob", post_prob)->required();
  post->add_option("--tensor", post_tensor)->required();
  post->add_option("--thr", post_thr);
  post->add_option("--map", post_map);
  post->add_option("--polygon", post_poly);
  post->add_option("--config", post_config);

  // eval
  auto* ev = app.add_subcommand("eval", "Compare two grid-map PGMs");
  std::string ev_pred, ev_gt, ev_dontcare;
  bool ev_json = false, ev_all = false;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--dontcare", ev_dontcare);
  ev->add_flag("--json", ev_json);
  ev->add_flag("--include-outside-roi", ev_all);

  // train
  auto* tr = app.add_subcommand("train", "Desk-scale training on the synthetic wedge dataset");
  std::string tr_output, tr_qat_output, tr_loss_csv;
  int tr_epochs = 30, tr_qat_epochs = 10, tr_frames = 200, tr_channels = 8, tr_blocks = 2;
  int tr_rows = 16, tr_bits = 18;
  double tr_bin = 2.5;
  std::uint32_t tr_seed = 42;
  tr->add_option("--output", tr_output)->required();
  tr->add_option("--qat-output", tr_qat_output);
  tr->add_option("--loss-csv", tr_loss_csv);
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--qat-epochs", tr_qat_epochs);
  tr->add_option("--frames", tr_frames);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--channels", tr_channels);
  tr->add_option("--blocks", tr_blocks);
  tr->add_option("--rows", tr_rows);
  tr->add_option("--bin-deg", tr_bin);
  tr->add_option("--bits", tr_bits);

  // stats
  auto* st = app.add_subcommand("stats", "Usage statistics or scanner-rate arithmetic");
  std::string st_input, st_format = "auto", st_config;
  std::vector<double> st_lidar;
  st->add_option("--input", st_input);
  st->add_option("--format", st_format)->check(CLI::IsMember({"auto", "kitti", "csv"}));
  st->add_option("--config", st_config);
  st->add_option("--lidar", st_lidar)->expected(4);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (pre->parsed())
      return cmd_preprocess(pre_input, pre_output, pre_format, pre_config, pre_rotate,
                            pre_verbose);
    if (inf->parsed()) return cmd_infer(inf_tensor, inf_weights, inf_mode, inf_output);
    if (qnt->parsed())
      return cmd_quantize(qnt_weights, qnt_bits, qnt_frac, qnt_act_bits, qnt_act_frac, qnt_output);
    if (sim->parsed())
      return cmd_simulate(sim_tensor, sim_weights, sim_clock, sim_trace, sim_output, sim_report,
                          sim_swap);
    if (post->parsed())
      return cmd_postprocess(post_prob, post_tensor, post_thr, post_map, post_poly, post_config);
    if (ev->parsed()) return cmd_eval(ev_pred, ev_gt, ev_dontcare, ev_json, ev_all);
    if (tr->parsed())
      return cmd_train(tr_output, tr_qat_output, tr_loss_csv, tr_epochs, tr_qat_epochs, tr_frames,
                       tr_seed, tr_channels, tr_blocks, tr_rows, tr_bin, tr_bits);
    if (st->parsed()) return cmd_stats(st_input, st_format, st_lidar, st_config);
  } catch (const chipnet::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMismatch;
  } catch (const chipnet::MalformedDataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMalformed;
  } catch (const chipnet::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const chipnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
