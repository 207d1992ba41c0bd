#include "estimand/cli.hpp"

int main(int argc, char** argv) { return estimand::cli::run(argc, argv); }
