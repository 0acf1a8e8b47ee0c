#include "srres/cli.hpp"

int main(int argc, char** argv) { return srres::cli::run(argc, argv); }
