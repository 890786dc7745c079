#include "fcurve/cli.hpp"

int main(int argc, char** argv) { return fcurve::run_cli(argc, argv); }
