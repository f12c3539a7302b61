// nodeval: command-line front end for the nodule evaluation library.
//
// Exit codes: 0 success, 1 input/validation error, 2 statistical degeneracy.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nodeval/nodeval.hpp"

namespace {

using namespace nodeval;

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw InputError("error writing '" + path + "'");
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thyroid-nodule reader/model evaluation toolkit", "nodeval"};
  app.set_version_flag("--version", std::string("nodeval ") + NODEVAL_VERSION);
  app.require_subcommand(1);

  // summarize
  std::string sum_in, sum_out;
  auto* summarize_cmd = app.add_subcommand("summarize", "Table-1 cohort statistics as JSON");
  summarize_cmd->add_option("--input", sum_in, "cohort CSV")->required();
  summarize_cmd->add_option("--out", sum_out, "summary JSON")->required();

  // evaluate
  std::string ev_in, ev_out, ev_estimator = "binormal", ev_group = "scanner", ev_format = "json", ev_merge = "3:2";
  EvaluationConfig cfg;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "AUC, DeLong and kappa report");
  evaluate_cmd->add_option("--input", ev_in, "cohort CSV")->required();
  evaluate_cmd->add_option("--boot", cfg.replicates, "bootstrap replicates")->capture_default_str();
  evaluate_cmd->add_option("--level", cfg.level, "confidence level")->capture_default_str();
  evaluate_cmd->add_option("--estimator", ev_estimator, "binormal|empirical")->capture_default_str();
  evaluate_cmd->add_option("--seed", cfg.seed, "bootstrap seed")->capture_default_str();
  evaluate_cmd->add_option("--group-by", ev_group, "scanner|none")->capture_default_str();
  evaluate_cmd->add_option("--min-group", cfg.min_group, "smallest analyzed group")->capture_default_str();
  evaluate_cmd->add_option("--merge", ev_merge, "kappa category merges, e.g. 3:2 (or 'none')")->capture_default_str();
  evaluate_cmd->add_option("--threads", cfg.threads, "bootstrap worker threads")->capture_default_str();
  evaluate_cmd->add_option("--format", ev_format, "json|csv|text")->capture_default_str();
  evaluate_cmd->add_option("--out", ev_out, "output file (directory for csv)")->required();

  // kappa
  std::string k_in, k_out, k_merge;
  auto* kappa_cmd = app.add_subcommand("kappa", "Pairwise Cohen's kappa between readers");
  kappa_cmd->add_option("--input", k_in, "cohort CSV")->required();
  kappa_cmd->add_option("--merge", k_merge, "category merges SRC:DST[,SRC:DST...]");
  kappa_cmd->add_option("--out", k_out, "kappa CSV")->required();

  // preprocess
  std::string pp_image, pp_calipers, pp_out, pp_box;
  int pp_margin = 32, pp_size = 160;
  auto* preprocess_cmd = app.add_subcommand("preprocess", "Square crop around calipers and resize");
  preprocess_cmd->add_option("--image", pp_image, "input PGM")->required();
  preprocess_cmd->add_option("--calipers", pp_calipers, "calipers JSON")->required();
  preprocess_cmd->add_option("--margin", pp_margin, "margin in pixels")->capture_default_str();
  preprocess_cmd->add_option("--size", pp_size, "output side")->capture_default_str();
  preprocess_cmd->add_option("--out", pp_out, "output PGM")->required();
  preprocess_cmd->add_option("--box", pp_box, "crop box JSON");

  // detect
  std::string d_image, d_template, d_out;
  int d_expected = 4;
  auto* detect_cmd = app.add_subcommand("detect", "Locate caliper markers by template matching");
  detect_cmd->add_option("--image", d_image, "input PGM")->required();
  detect_cmd->add_option("--template", d_template, "marker template PGM")->required();
  detect_cmd->add_option("--expected", d_expected, "2 or 4")->capture_default_str();
  detect_cmd->add_option("--out", d_out, "calipers JSON")->required();

  // infer
  std::string i_model, i_trans, i_long, i_out;
  auto* infer_cmd = app.add_subcommand("infer", "Malignancy probability from two views");
  infer_cmd->add_option("--model", i_model, "weights file")->required();
  infer_cmd->add_option("--trans", i_trans, "transverse view PGM")->required();
  infer_cmd->add_option("--long", i_long, "longitudinal view PGM")->required();
  infer_cmd->add_option("--out", i_out, "probabilities JSON")->required();

  // model init
  std::string m_out;
  std::uint64_t m_seed = 1;
  std::vector<int> m_channels(kDefaultChannels.begin(), kDefaultChannels.end());
  auto* model_cmd = app.add_subcommand("model", "Model utilities");
  model_cmd->require_subcommand(1);
  auto* model_init = model_cmd->add_subcommand("init", "Write a randomly initialized weights file");
  model_init->add_option("--seed", m_seed, "initialization seed")->capture_default_str();
  model_init->add_option("--channels", m_channels, "six conv channel counts")->expected(kConvLayers);
  model_init->add_option("--out", m_out, "weights file")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic data generators");
  synth_cmd->require_subcommand(1);
  std::string sc_spec, sc_out;
  auto* synth_cohort = synth_cmd->add_subcommand("cohort", "Synthetic cohort CSV");
  synth_cohort->add_option("--spec", sc_spec, "cohort spec JSON (defaults when omitted)");
  synth_cohort->add_option("--out", sc_out, "cohort CSV")->required();
  std::string si_out, si_truth, si_template;
  int si_n = 4, si_w = 256, si_h = 192;
  std::uint64_t si_seed = 7;
  auto* synth_image = synth_cmd->add_subcommand("image", "Synthetic caliper image");
  synth_image->add_option("--n-calipers", si_n, "2 or 4")->capture_default_str();
  synth_image->add_option("--seed", si_seed, "seed")->capture_default_str();
  synth_image->add_option("--width", si_w, "image width")->capture_default_str();
  synth_image->add_option("--height", si_h, "image height")->capture_default_str();
  synth_image->add_option("--out", si_out, "output PGM")->required();
  synth_image->add_option("--truth", si_truth, "ground-truth calipers JSON");
  synth_image->add_option("--template", si_template, "also write the marker template PGM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*summarize_cmd) {
      write_json_file(sum_out, to_json(summarize(load_cohort(sum_in))));
    } else if (*evaluate_cmd) {
      cfg.estimator = parse_estimator(ev_estimator);
      cfg.group_by = parse_group_by(ev_group);
      cfg.merge = ev_merge == "none" ? std::vector<std::pair<int, int>>{} : parse_merge_rules(ev_merge);
      const auto format = parse_report_format(ev_format);
      emit(evaluate(load_cohort(ev_in), cfg), format, ev_out);
    } else if (*kappa_cmd) {
      const auto pairs = reader_kappas(load_cohort(k_in), parse_merge_rules(k_merge));
      std::ofstream out(k_out);
      if (!out) throw InputError("cannot write '" + k_out + "'");
      write_kappa_csv(out, pairs);
      for (const auto& p : pairs)
        if (p.result.degenerate)
          std::cerr << "warning: " << kappa_pair_label(p) << ": both readers used a single category; kappa set to 1\n";
    } else if (*preprocess_cmd) {
      const GrayImage img = load_pgm(pp_image);
      const CaliperSet calipers = load_calipers(pp_calipers);
      validate(calipers, img);
      const BBox bbox = caliper_bbox(calipers);
      const auto [crop, box] = square_crop_with_margin(img, bbox, pp_margin);
      save_pgm(pp_out, to_gray(resize_bilinear(crop, pp_size, pp_size)));
      if (!pp_box.empty()) {
        Json j = to_json(box);
        j["bbox"] = {bbox.xmin, bbox.ymin, bbox.xmax, bbox.ymax};
        j["margin"] = pp_margin;
        j["output_size"] = pp_size;
        write_json_file(pp_box, j);
      }
    } else if (*detect_cmd) {
      const auto calipers = detect_calipers(load_pgm(d_image), load_pgm(d_template), d_expected);
      write_json_file(d_out, to_json(calipers));
    } else if (*infer_cmd) {
      const CnnModel model = load_weights(i_model);
      const int side = model.input_side();
      const auto r = infer_nodule(model, resize_bilinear(load_pgm(i_trans), side, side),
                                  resize_bilinear(load_pgm(i_long), side, side));
      write_json_file(i_out, Json{{"p_transverse", r.p_transverse},
                                  {"p_longitudinal", r.p_longitudinal},
                                  {"p_fused", r.p_fused}});
    } else if (*model_init) {
      std::array<int, kConvLayers> ch{};
      std::copy(m_channels.begin(), m_channels.end(), ch.begin());
      CnnModel model(ch);
      init_random(model, m_seed);
      save_weights(model, m_out);
    } else if (*synth_cohort) {
      CohortSpec spec;
      if (!sc_spec.empty()) spec = cohort_spec_from_json(read_json_file(sc_spec));
      save_cohort(sc_out, generate_cohort(spec));
    } else if (*synth_image) {
      const auto [img, truth] = generate_caliper_image(si_w, si_h, si_n, si_seed);
      save_pgm(si_out, img);
      if (!si_truth.empty()) write_json_file(si_truth, to_json(truth));
      if (!si_template.empty()) save_pgm(si_template, make_cross_template(kMarkerArm));
    }
  } catch (const DegenerateError& e) {
    std::cerr << "nodeval: statistical degeneracy: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "nodeval: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "nodeval: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
