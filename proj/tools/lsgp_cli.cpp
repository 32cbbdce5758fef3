// lsgp: localized GP regression experiments from the command line.
//
//   lsgp doppler-demo  --n 400 --seed 3 --out runs/doppler
//   lsgp prior-samples --profile rectangular --h 0.5 --out runs/prior
//   lsgp benchmark     --data yacht.csv --methods lsgpr:hilbert,gp,knn --splits 10
//   lsgp predict       --data train.csv --query q.csv --method lsgpr --m 20

#include "lsgp/bench.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>

namespace {

using Command = void (*)(const lsgp::RunConfig&, std::ostream&);

void add_config_flags(CLI::App& sub, std::map<std::string, std::string>& given, bool& noise_is_sd,
                      std::string& config_path) {
    sub.set_help_flag("--help", "print this help and exit");
    sub.add_option("--config", config_path, "key = value file; flags override it");
    for (const auto& [key, value] : lsgp::RunConfig::defaults()) {
        std::string flag = "--" + key;
        const std::string dashed = [k = key]() mutable {
            std::replace(k.begin(), k.end(), '_', '-');
            return k;
        }();
        if (key == "noise_is_sd") continue;
        if (dashed != key) flag += ",--" + dashed;
        sub.add_option(flag, given[key], "default: " + (value.empty() ? std::string("(none)") : value));
    }
    sub.add_flag("--noise-is-sd,--noise_is_sd", noise_is_sd, "treat noise_variance as a standard deviation");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localized Gaussian process regression experiments"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        Command run;
    };
    const Sub subs[] = {
        {"doppler-demo", "global GPR vs localized GPR on the Doppler function",
         [](const lsgp::RunConfig& c, std::ostream& log) { lsgp::cmd_doppler_demo(c, log); }},
        {"prior-samples", "draws from the (localized) exponential-kernel prior on [-1, 1]",
         [](const lsgp::RunConfig& c, std::ostream& log) { lsgp::cmd_prior_samples(c, log); }},
        {"benchmark", "repeated-split comparison with cross-validated hyperparameters",
         [](const lsgp::RunConfig& c, std::ostream& log) { lsgp::cmd_benchmark(c, log); }},
        {"predict", "fit on a training CSV and predict the rows of a query CSV",
         [](const lsgp::RunConfig& c, std::ostream& log) { lsgp::cmd_predict(c, log); }},
    };

    std::map<std::string, std::string> given;
    bool noise_is_sd = false;
    std::string config_path;
    std::vector<std::pair<CLI::App*, Command>> handlers;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_config_flags(*sub, given, noise_is_sd, config_path);
        handlers.emplace_back(sub, s.run);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        lsgp::RunConfig config;
        if (!config_path.empty()) config.load_file(config_path);
        for (const auto& [key, value] : given) {
            if (!value.empty()) config.set(key, value);
        }
        if (noise_is_sd) config.set("noise_is_sd", "true");
        for (const auto& [sub, run] : handlers) {
            if (sub->parsed()) run(config, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return lsgp::exit_code_for(e);
    }
    return 0;
}
