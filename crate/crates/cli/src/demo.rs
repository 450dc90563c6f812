use std::io::Write;

use pc_core::distributed::{AggregateReport, ClusterConfig, DistError, JoinPlan, SimCluster};
use pc_core::workloads::join3::{cluster_join3, expected_matches, keyed_recs};
use pc_core::workloads::kmeans::{
    cluster_kmeans, initial_centroids, point_registry, point_set, point_udfs, reference_kmeans,
    two_blobs, KMeansParams,
};
use pc_core::workloads::matmul::{cluster_matmul, matrix_registry, matrix_udfs, Matrix};
use pc_core::workloads::synthetic::{rec_registry, rec_udfs};

use crate::{read, CliError, Demo, DemoArgs};

fn config(args: &DemoArgs) -> Result<ClusterConfig, CliError> {
    let mut c = match &args.config {
        Some(path) => ClusterConfig::parse(&read(path)?)?,
        None => ClusterConfig::default(),
    };
    if let Some(n) = args.nodes {
        c.nodes = n;
    }
    if let Some(n) = args.chunk_size {
        c.chunk_size = n;
    }
    if let Some(n) = args.page_size {
        c.page_size = n;
    }
    c.check()?;
    Ok(c)
}

fn plan(args: &DemoArgs) -> JoinPlan {
    if args.broadcast {
        JoinPlan::Broadcast
    } else {
        JoinPlan::Shuffle
    }
}

fn agg_line(out: &mut dyn Write, label: &str, r: &AggregateReport) -> std::io::Result<()> {
    writeln!(
        out,
        "{label} stage={} sink_pages={} shipped_pages={} output_pages={} import_fixups={}",
        r.stage, r.sink_pages, r.shipped_pages, r.output_pages, r.import_fixups
    )
}

pub fn run(args: &DemoArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let c = config(args)?;
    writeln!(
        out,
        "nodes={} N={} K={} M={} page_size={} chunk_size={}",
        c.nodes, c.n_threads, c.k_combiners, c.m_partitions, c.page_size, c.chunk_size
    )?;
    match args.demo {
        Demo::Kmeans => kmeans(args, c, out, err),
        Demo::Join3 => join3(args, c, out),
        Demo::Matmul => matmul(args, c, out),
    }
}

fn kmeans(
    args: &DemoArgs,
    c: ClusterConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let (pts, _) = two_blobs(args.seed, args.points, 10.0);
    let init = initial_centroids(&pts, 2, args.seed);
    let params = KMeansParams {
        k: 2,
        max_iters: args.max_iters,
        epsilon: args.epsilon,
    };
    let reg = point_registry();
    let mut cluster = SimCluster::new(c, reg.clone(), point_udfs())?;
    cluster.distribute(
        "kmeans",
        "points",
        &point_set(&reg, &pts, c.page_size).map_err(DistError::from)?,
    )?;
    let mut lines = Vec::new();
    let got = cluster_kmeans(&mut cluster, "kmeans", "points", &init, params, |i, r| {
        if args.trace {
            let mut buf = Vec::new();
            let _ = agg_line(&mut buf, &format!("iteration={i}"), r);
            lines.push(buf);
        }
    })?;
    lines.iter().try_for_each(|l| out.write_all(l))?;
    let want = reference_kmeans(&pts, &init, params);
    let diff = got
        .centroids
        .iter()
        .zip(&want.centroids)
        .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
        .fold(0.0, f64::max);
    writeln!(
        out,
        "points={} iterations={} converged={}",
        pts.len(),
        got.iterations,
        got.converged
    )?;
    for (i, p) in got.centroids.iter().enumerate() {
        writeln!(out, "centroid[{i}]={:.6},{:.6}", p[0], p[1])?;
    }
    writeln!(
        out,
        "reference_iterations={} max_abs_diff={diff:.3e}",
        want.iterations
    )?;
    if !got.converged {
        writeln!(err, "no convergence after {} iterations", got.iterations)?;
        return Err(CliError::NotConverged(got.iterations));
    }
    Ok(())
}

fn join3(args: &DemoArgs, c: ClusterConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let keys = (args.rows as i64 / 10).max(1);
    let sets: Vec<_> = (0..3)
        .map(|i| keyed_recs(args.seed + i, args.rows, keys))
        .collect();
    let sets = [&sets[0][..], &sets[1][..], &sets[2][..]];
    let mut cluster = SimCluster::new(c, rec_registry(), rec_udfs())?;
    let r = cluster_join3(&mut cluster, sets, plan(args))?;
    let expected = expected_matches(sets);
    writeln!(
        out,
        "plan={:?} stages={} candidates={} matches={} expected={expected}",
        plan(args),
        r.stages,
        r.candidates,
        r.matches
    )?;
    if args.trace {
        let net = cluster.net.stats();
        writeln!(
            out,
            "shipped_pages={} output_pages={} import_fixups={} net_bytes={}",
            r.shipped_pages, r.output_pages, r.import_fixups, net.bytes
        )?;
    }
    if r.matches != expected {
        return Err(CliError::Check(format!(
            "join produced {} tuples, expected {expected}",
            r.matches
        )));
    }
    Ok(())
}

fn matmul(args: &DemoArgs, c: ClusterConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let a = Matrix::random(args.seed, args.dim, args.dim);
    let b = Matrix::random(args.seed + 1, args.dim, args.dim);
    let mut cluster = SimCluster::new(c, matrix_registry(), matrix_udfs())?;
    let (got, r) = cluster_matmul(&mut cluster, &a, &b, args.block, plan(args))?;
    let diff = got.max_abs_diff(&a.multiply(&b));
    writeln!(
        out,
        "dim={} block={} block_products={} max_abs_diff={diff:.3e}",
        args.dim, args.block, r.join.matches
    )?;
    if args.trace {
        writeln!(
            out,
            "join stages={} shipped_pages={} import_fixups={}",
            r.join.stages, r.join.shipped_pages, r.join.import_fixups
        )?;
        agg_line(out, "aggregate", &r.aggregate)?;
    }
    if diff > 1e-9 {
        return Err(CliError::Check(format!(
            "product differs from the dense result by {diff:e}"
        )));
    }
    Ok(())
}
