#include "zng/cli.hpp"

int main(int argc, char** argv) { return zng::cli::run(argc, argv); }
