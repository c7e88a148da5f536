// Regenerates data/topologies/*.json from the built-in recipes.
#include <sdacc/unet_recipe.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    std::filesystem::path dir = argc > 1 ? argv[1] : (sdacc::data_dir() / "topologies");
    std::filesystem::create_directories(dir);
    for (auto m : {sdacc::ModelId::sd14, sdacc::ModelId::sd21base, sdacc::ModelId::sdxl}) {
        auto g = sdacc::expand_recipe(sdacc::recipe_for(m));
        auto path = dir / (std::string(sdacc::to_string(m)) + ".json");
        std::ofstream(path, std::ios::binary) << sdacc::topology_to_json(g);
        std::cout << path.string() << ": " << g.layers.size() << " layers\n";
    }
}
