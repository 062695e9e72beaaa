#include <iostream>

#include <CLI11.hpp>

#include "causalfm/io.hpp"
#include "fixtures.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Regenerate the synthetic replay stores under data/replay"};
  std::filesystem::path data_dir = causalfm::default_data_dir();
  app.add_option("--data-dir", data_dir, "Data tree to read from and write into");
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& model : fixtures::kModels) {
      const auto records = fixtures::build_store(model, data_dir);
      const auto path = data_dir / "replay" / (model + ".jsonl");
      causalfm::corpus::save_transcripts(path, records);
      std::cout << path.string() << ": " << records.size() << " records\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
