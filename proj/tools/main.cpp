#include "morphopt/cli/commands.hpp"

int main(int argc, char** argv) { return morphopt::cli::run(argc, argv); }
