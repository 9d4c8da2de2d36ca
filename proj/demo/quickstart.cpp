// End-to-end walkthrough: build the demo board, fit a golden model from a
// few tolerance-varied genuine boards, then screen one genuine and one
// tampered board against it.

#include <cstdio>

#include "pdnpulse/pdnpulse.hpp"

using namespace pdnpulse;

int main() {
  // a six-position decoupling chain probed at both ends
  const PdnNetlist board = with_chain_ports(make_decap_chain_board(), {1, 6});
  PdnNetlist tampered = apply_anomalies(board, {anomaly_attiny85});
  tampered.label = board.label + "_rogue";

  FrequencyGrid grid;
  grid.points = 512;

  // five genuine boards at +/-10% component tolerance
  ToleranceModel model_spec;
  model_spec.tolerance = 0.10;
  model_spec.seed = derive_stream(42, "quickstart/golden", 0);

  std::vector<BoardSignature> genuine;
  for (int g = 0; g < 5; ++g)
    genuine.push_back(solve_z(sample_variation(board, model_spec, g), grid));

  FdConfig cfg;
  const GoldenModel model = fit_golden(genuine, cfg);
  std::printf("golden model: mu=%.6g sigma=%.6g threshold=%.6g\n", model.mu, model.sigma,
              model.threshold);

  // screen a fresh genuine board and a tampered one
  ToleranceModel test_spec = model_spec;
  test_spec.seed = derive_stream(42, "quickstart/test", 0);

  const BoardSignature fresh = solve_z(sample_variation(board, test_spec, 0), grid);
  const BoardSignature rogue = solve_z(sample_variation(tampered, test_spec, 1), grid);

  for (const auto* sig : {&fresh, &rogue}) {
    const DetectionReport report = detect(model, *sig);
    std::printf("%-16s statistic=%.6g threshold=%.6g verdict=%s\n", sig->label.c_str(),
                report.decision_statistic, report.threshold_used, to_string(report.verdict));
  }
  return 0;
}
