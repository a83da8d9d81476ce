import { readdirSync, writeFileSync } from "fs";
import { join } from "path";

import { loadImage, toGray } from "./image.js";
import { miou, mse, ShapeMismatchError } from "./metrics.js";

export class MissingPairError extends Error {}

export type PerfMetric = "miou" | "mse";

export interface DumpResult {
  queries: string[];
  sources: string[];
  values: Float32Array; // row-major, rows = queries
}

const MAGIC = "ICLPERF1";

function stripExtension(name: string): string {
  const dot = name.lastIndexOf(".");
  return dot >= 0 ? name.slice(0, dot) : name;
}

/**
 * Score one prediction image per (query, source) pair against the query's
 * ground truth.
 *
 * Prediction files are named `<query>__<source>.<ext>`; ground-truth files
 * `<query>.<ext>`. The grid must be complete: every query needs one
 * prediction for every source id seen in the dump.
 */
export function dumpPerfMatrix(predDir: string, gtDir: string, metric: PerfMetric): DumpResult {
  const predictions = new Map<string, string>(); // "query__source" -> path
  const queries = new Set<string>();
  const sources = new Set<string>();
  for (const file of readdirSync(predDir).sort()) {
    const base = stripExtension(file);
    const split = base.indexOf("__");
    if (split <= 0) continue;
    const query = base.slice(0, split);
    const source = base.slice(split + 2);
    predictions.set(`${query}__${source}`, join(predDir, file));
    queries.add(query);
    sources.add(source);
  }
  if (predictions.size === 0) {
    throw new Error(`no <query>__<source> prediction files in ${predDir}`);
  }

  const gtPaths = new Map<string, string>();
  for (const file of readdirSync(gtDir).sort()) {
    gtPaths.set(stripExtension(file), join(gtDir, file));
  }

  const queryList = [...queries].sort();
  const sourceList = [...sources].sort();

  const missing: string[] = [];
  for (const query of queryList) {
    if (!gtPaths.has(query)) missing.push(`ground truth for ${query}`);
    for (const source of sourceList) {
      if (!predictions.has(`${query}__${source}`)) missing.push(`${query}__${source}`);
    }
  }
  if (missing.length > 0) {
    throw new MissingPairError(`incomplete dump, missing: ${missing.join(", ")}`);
  }

  const score = metric === "miou" ? miou : mse;
  const values = new Float32Array(queryList.length * sourceList.length);
  for (let r = 0; r < queryList.length; r++) {
    const gt = toGray(loadImage(gtPaths.get(queryList[r])!));
    for (let c = 0; c < sourceList.length; c++) {
      const pred = toGray(loadImage(predictions.get(`${queryList[r]}__${sourceList[c]}`)!));
      if (pred.length !== gt.length) {
        throw new ShapeMismatchError(
          `prediction ${queryList[r]}__${sourceList[c]} does not match its ground truth size`,
        );
      }
      values[r * sourceList.length + c] = Math.fround(score(pred, gt));
    }
  }
  return { queries: queryList, sources: sourceList, values };
}

export function writePerfMatrix(result: DumpResult, metric: PerfMetric, outPath: string): void {
  const header = Buffer.alloc(MAGIC.length + 8);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(result.queries.length, MAGIC.length);
  header.writeUInt32LE(result.sources.length, MAGIC.length + 4);
  const payload = Buffer.alloc(result.values.length * 4);
  for (let i = 0; i < result.values.length; i++) {
    payload.writeFloatLE(result.values[i], i * 4);
  }
  writeFileSync(outPath, Buffer.concat([header, payload]));

  const sidecar = {
    queries: result.queries,
    sources: result.sources,
    metric,
    higher_is_better: metric === "miou",
    subsample_cap: null,
  };
  writeFileSync(outPath + ".json", JSON.stringify(sidecar) + "\n", "utf-8");
}
