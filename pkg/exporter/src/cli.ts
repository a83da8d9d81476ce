import { parseArgs } from "util";

import { availableEncoders, getEncoder } from "./encoder.js";
import { exportEmbeddings, writeExportManifest } from "./exportEmbeddings.js";
import { dumpPerfMatrix, PerfMetric, writePerfMatrix } from "./perfMatrix.js";

const USAGE = `usage:
  export-embeddings --images DIR --out FILE [--encoder NAME] [--query-every N]
                    [--domain NAME] [--skip-unreadable]
  dump-perf-matrix  --pred DIR --gt DIR --out FILE --metric miou|mse

encoders: ${availableEncoders().join(", ")}`;

function runExport(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      images: { type: "string" },
      out: { type: "string" },
      encoder: { type: "string", default: "grid-pool-v1" },
      "query-every": { type: "string", default: "0" },
      domain: { type: "string" },
      "skip-unreadable": { type: "boolean", default: false },
    },
  });
  if (!values.images || !values.out) {
    throw new Error("export-embeddings requires --images and --out");
  }
  const config = {
    imageDir: values.images,
    encoder: getEncoder(values.encoder!),
    outPath: values.out,
    queryEvery: parseInt(values["query-every"]!, 10),
    skipUnreadable: values["skip-unreadable"]!,
    domain: values.domain ?? null,
  };
  const result = exportEmbeddings(config, (line) => console.error(line));
  writeExportManifest(values.out + ".manifest.json", config, result);
  console.error(`wrote ${result.records} records (dim ${result.dimension}) to ${values.out}`);
  return 0;
}

function runDump(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      pred: { type: "string" },
      gt: { type: "string" },
      out: { type: "string" },
      metric: { type: "string", default: "miou" },
    },
  });
  if (!values.pred || !values.gt || !values.out) {
    throw new Error("dump-perf-matrix requires --pred, --gt and --out");
  }
  if (values.metric !== "miou" && values.metric !== "mse") {
    throw new Error(`unknown metric ${values.metric}`);
  }
  const result = dumpPerfMatrix(values.pred, values.gt, values.metric as PerfMetric);
  writePerfMatrix(result, values.metric as PerfMetric, values.out);
  console.error(
    `wrote ${result.queries.length}x${result.sources.length} ${values.metric} matrix to ${values.out}`,
  );
  return 0;
}

export function main(argv: string[]): number {
  const [subcommand, ...rest] = argv;
  try {
    if (subcommand === "export-embeddings") return runExport(rest);
    if (subcommand === "dump-perf-matrix") return runDump(rest);
    console.error(USAGE);
    return 1;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
