#include "hitpro/cli.hpp"

int main(int argc, char** argv) { return hitpro::run_cli(argc, argv); }
