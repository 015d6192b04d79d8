# Controller and base-station agents of the distributed decomposition
