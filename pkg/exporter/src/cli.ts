/** Command-line entry: export, classify, make-test-image. */

import * as path from "path";

import { ModelUnavailableError, requireModelDir } from "./backend";
import { DEFAULT_TEMPLATES, ToyEmbedder, classifyPrior, loadLabelSet } from "./classify";
import { DEFAULT_BLOCKS, exportBundle } from "./exporter";
import { readPpm, writePpm } from "./tensorio";
import { ToyBackend, makeTestImage } from "./toy";

interface Args {
  command: string;
  options: Map<string, string>;
  flags: Set<string>;
}

function parseArgs(argv: string[]): Args {
  if (argv.length === 0) throw new Error("missing command");
  const args: Args = { command: argv[0], options: new Map(), flags: new Set() };
  for (let i = 1; i < argv.length; i++) {
    const token = argv[i];
    if (!token.startsWith("--")) throw new Error(`unexpected argument ${token}`);
    const name = token.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      args.options.set(name, argv[++i]);
    } else {
      args.flags.add(name);
    }
  }
  return args;
}

function need(args: Args, name: string): string {
  const value = args.options.get(name);
  if (value === undefined) throw new Error(`--${name} is required`);
  return value;
}

function pickBackend(args: Args): ToyBackend {
  const kind = args.options.get("backend") ?? "toy";
  if (kind === "toy") return new ToyBackend();
  if (kind === "model") requireModelDir(args.options.get("model-dir"));
  throw new Error(`unknown backend ${kind}`);
}

function cmdExport(args: Args): number {
  const image = readPpm(need(args, "image"));
  const backend = pickBackend(args);
  let label = "";
  if (!args.flags.has("no-prior")) {
    const labelSet = loadLabelSet(need(args, "labels"));
    const templates = DEFAULT_TEMPLATES;
    label = classifyPrior(image, labelSet, templates, new ToyEmbedder()).label;
  }
  const blocks = (args.options.get("blocks") ?? DEFAULT_BLOCKS.join(","))
    .split(",").map((s) => parseInt(s, 10));
  const result = exportBundle(image, label, backend, {
    tSteps: parseInt(args.options.get("steps") ?? "40", 10),
    blocks,
    outDir: need(args, "out"),
    tokenIndex: 1,
  });
  console.log(
    `label="${label}" wrote ${result.files} tensors ` +
    `(${result.tSteps} steps x ${result.nLayers} layers x 3 kinds) -> ${need(args, "out")}`);
  console.log(`latent reconstruction error ${result.reconstructionError.toExponential(3)}`);
  return 0;
}

function cmdClassify(args: Args): number {
  const image = readPpm(need(args, "image"));
  const labelSet = loadLabelSet(need(args, "labels"));
  const { label, scores } = classifyPrior(image, labelSet, DEFAULT_TEMPLATES, new ToyEmbedder());
  for (const [name, score] of scores) console.log(`${name}\t${score.toFixed(6)}`);
  console.log(`top: ${label}`);
  return 0;
}

function cmdMakeTestImage(args: Args): number {
  const size = parseInt(args.options.get("size") ?? "512", 10);
  const seed = parseInt(args.options.get("seed") ?? "0", 10);
  const out = need(args, "out");
  writePpm(makeTestImage(size, seed), out);
  console.log(`wrote ${size}x${size} test image -> ${path.resolve(out)}`);
  return 0;
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    switch (args.command) {
      case "export":
        return cmdExport(args);
      case "classify":
        return cmdClassify(args);
      case "make-test-image":
        return cmdMakeTestImage(args);
      default:
        throw new Error(`unknown command ${args.command}`);
    }
  } catch (err) {
    if (err instanceof ModelUnavailableError) {
      console.error(`model unavailable: ${(err as Error).message}`);
      return 3;
    }
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
