#include "figcap/cli.hpp"

int main(int argc, char** argv) { return figcap::cli::run(argc, argv); }
