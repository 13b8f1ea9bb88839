/**
 * CLI: train the transformer policy against a bridge-served scenario.
 *
 *   node dist/train.js --scenario shanghai4 --episodes 500 --seed 1 \
 *        --endpoint 127.0.0.1:7311 --out runs/sh4
 *
 * Without --endpoint a local `python3 -m ssrd.cli serve --stdio` is spawned.
 */

import { BridgeClient } from "./client.js";
import { DEFAULT_CONFIG, PolicyConfig } from "./policy.js";
import { TppoTrainer } from "./ppo.js";

interface Args {
  scenario: string;
  episodes: number;
  seed: number;
  endpoint?: string;
  out?: string;
  nPaths?: number;
  serveCmd: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {
    scenario: "", episodes: 500, seed: 1,
    serveCmd: "python3 -m ssrd.cli serve --stdio",
  };
  for (let i = 0; i < argv.length; i++) {
    const key = argv[i];
    const value = argv[i + 1];
    switch (key) {
      case "--scenario": args.scenario = value; i++; break;
      case "--episodes": args.episodes = parseInt(value, 10); i++; break;
      case "--seed": args.seed = parseInt(value, 10); i++; break;
      case "--endpoint": args.endpoint = value; i++; break;
      case "--out": args.out = value; i++; break;
      case "--n-paths": args.nPaths = parseInt(value, 10); i++; break;
      case "--serve-cmd": args.serveCmd = value; i++; break;
      default:
        throw new Error(`unknown argument ${key}`);
    }
  }
  if (!args.scenario) throw new Error("--scenario is required");
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  let client: BridgeClient;
  if (args.endpoint) {
    const [host, port] = args.endpoint.split(":");
    client = await BridgeClient.connectTcp(host, parseInt(port, 10));
  } else {
    const [cmd, ...cmdArgs] = args.serveCmd.split(/\s+/);
    client = BridgeClient.spawnStdio(cmd, cmdArgs);
  }
  await client.hello();
  const info = await client.init(args.scenario, args.nPaths);
  console.error(`scenario ${info.scenario}: N=${info.n_regions}, k=${info.k}, T=${info.horizon}`);

  const cfg: PolicyConfig = { ...DEFAULT_CONFIG, nRegions: info.n_regions, k: info.k };
  const trainer = new TppoTrainer(client, info, cfg, args.seed);
  const returns: number[] = [];
  const summary = await trainer.train({
    episodes: args.episodes,
    seed: args.seed,
    outDir: args.out,
    onEpisode: (ep, result) => {
      returns.push(result.totalReward);
      if ((ep + 1) % 25 === 0) {
        const recent = returns.slice(-25);
        const mean = recent.reduce((a, b) => a + b, 0) / recent.length;
        console.error(`episode ${ep + 1}: mean return (25) ${mean.toFixed(1)}`);
      }
    },
  });

  const window = Math.min(25, summary.episodeReturns.length);
  const tail = summary.episodeReturns.slice(-window);
  const meanTail = tail.reduce((a, b) => a + b, 0) / window;
  console.error(`trained ${summary.episodes} episodes; last-${window} mean return ${meanTail.toFixed(1)}`);
  console.log(JSON.stringify({
    best_return: summary.bestReturn,
    best_sequence: summary.bestSequence,
    episodes: summary.episodes,
  }));
  await client.close();
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
