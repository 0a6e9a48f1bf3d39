/**
 * Command line wrapper around the figure builders.
 *
 * Exit codes follow the inference CLI's convention: 0 success, 2 usage
 * error, 3 unreadable or malformed inputs (including a refused overwrite).
 */

import { pathToFileURL } from "node:url";

import yargs from "yargs";

import { InputError } from "./csv.js";
import { FIGURE_KINDS, FigureKind, OutputExistsError, render } from "./figures.js";

export const EXIT_OK = 0;
export const EXIT_USAGE = 2;
export const EXIT_BAD_INPUT = 3;

export async function main(argv: string[]): Promise<number> {
  let usageError: string | undefined;
  const parser = yargs(argv)
    .scriptName("rtinfer-plots")
    .usage("$0 --run <dir> --kind <kind> --out <file.svg> [--truth <csv>] [--overwrite]")
    .option("run", { type: "string", demandOption: true, describe: "run directory to read" })
    .option("kind", {
      type: "string",
      demandOption: true,
      choices: FIGURE_KINDS as unknown as string[],
      describe: "figure kind",
    })
    .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
    .option("truth", { type: "string", describe: "CSV with a truth series to overlay" })
    .option("overwrite", { type: "boolean", default: false, describe: "replace an existing output file" })
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      usageError = msg ?? err?.message ?? "invalid arguments";
    })
    .version("0.1.0")
    .help();

  const args = await parser.parse();
  if (usageError !== undefined) {
    process.stderr.write(`error: ${usageError}\n`);
    process.stderr.write("run with --help for usage\n");
    return EXIT_USAGE;
  }
  // --help / --version print and parse to completion; nothing left to do
  if (argv.includes("--help") || argv.includes("--version")) {
    return EXIT_OK;
  }

  try {
    render({
      runDir: args.run as string,
      kind: args.kind as FigureKind,
      outPath: args.out as string,
      truthFile: args.truth as string | undefined,
      overwrite: args.overwrite as boolean,
    });
  } catch (e) {
    if (e instanceof InputError || e instanceof OutputExistsError) {
      process.stderr.write(`error: ${e.message}\n`);
      return EXIT_BAD_INPUT;
    }
    throw e;
  }
  process.stdout.write(`plot: wrote ${args.out}\n`);
  return EXIT_OK;
}

const invokedDirectly =
  typeof process.argv[1] === "string" &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`${err?.stack ?? err}\n`);
      process.exit(1);
    },
  );
}
