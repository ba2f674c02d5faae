// Writes a synthetic dual-administration study: two inventory files, a
// long-format score CSV and one embedding file covering both inventories.
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "symx/io.hpp"
#include "symx/synthetic.hpp"

int main(int argc, char** argv) {
  symx::SyntheticConfig config;
  std::string out_dir = ".";
  CLI::App app{"Generate a synthetic dual-administration study", "crosswalk-synth"};
  app.add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  app.add_option("--participants", config.participants, "Number of participants")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--seed", config.seed, "Generator seed")->capture_default_str();
  app.add_option("--noise", config.noise_sd, "Response noise standard deviation")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto study = symx::generate_study(config);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    symx::write_file_atomic(dir / "source_inventory.json", symx::serialize_inventory(study.source).dump(2) + "\n");
    symx::write_file_atomic(dir / "target_inventory.json", symx::serialize_inventory(study.target).dump(2) + "\n");
    std::ostringstream scores;
    symx::write_scores(scores, study.cohort);
    symx::write_file_atomic(dir / "scores.csv", scores.str());
    nlohmann::json embeddings = symx::serialize_embeddings(study.source_embeddings);
    const nlohmann::json target_vectors = symx::serialize_embeddings(study.target_embeddings)["vectors"];
    for (const auto& [item, v] : target_vectors.items()) {
      embeddings["vectors"][item] = v;
    }
    symx::write_file_atomic(dir / "embeddings.json", embeddings.dump(2) + "\n");
    std::cerr << "crosswalk-synth: wrote " << study.cohort.records.size() << " participants to " << dir.string()
              << '\n';
  } catch (const std::exception& e) {
    std::cerr << "crosswalk-synth: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
