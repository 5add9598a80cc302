#include "playtitle/cli.hpp"

int main(int argc, char** argv) { return playtitle::cli::run(argc, argv); }
